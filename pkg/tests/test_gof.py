import numpy as np
import pytest

from thetabm.gof import ff_model_vs_data, ff_two_sample, orthant_fractions
from thetabm.model import RtbmParams, affine_pushforward, sample
from thetabm.preprocess import AffineMap

from conftest import random_params


def test_identical_samples_zero():
    a = np.random.default_rng(0).normal(size=(50, 2))
    r = ff_two_sample(a, a.copy())
    assert r.d_stat == 0.0 and r.scaled == 0.0


def test_separated_clusters_one():
    rng = np.random.default_rng(1)
    a = rng.uniform(0, 1, size=(40, 2))
    b = rng.uniform(2, 3, size=(60, 2))
    r = ff_two_sample(a, b)
    assert r.d_stat == 1.0
    assert r.scaled == pytest.approx(np.sqrt(40 * 60 / 100))


def test_symmetric_and_bounded():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(80, 3)), rng.normal(0.3, 1.0, size=(70, 3))
    r1, r2 = ff_two_sample(a, b), ff_two_sample(b, a)
    assert r1.d_stat == r2.d_stat
    assert 0.0 <= r1.d_stat <= 1.0


def test_orthant_fractions_ties_excluded():
    pts = np.array([[1.0, 1.0], [-1.0, 2.0], [0.0, 5.0]])
    f = orthant_fractions(pts, np.zeros((1, 2)))
    # codes: bit0 = x>0, bit1 = y>0; the tied point is in no orthant
    assert np.allclose(f[0], [0, 0, 1 / 3, 1 / 3])


def test_invalid_inputs():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        ff_two_sample(rng.normal(size=(20, 1)), rng.normal(size=(20, 1)))
    with pytest.raises(ValueError):
        ff_two_sample(rng.normal(size=(20, 2)), rng.normal(size=(20, 3)))
    with pytest.raises(ValueError):
        ff_two_sample(rng.normal(size=(5, 2)), rng.normal(size=(20, 2)))


def test_null_calibration():
    below = 0
    for seed in range(100):
        rng = np.random.default_rng([7, seed])
        below += ff_two_sample(rng.normal(size=(500, 2)), rng.normal(size=(500, 2))).scaled < 2.5
    assert below >= 95


def test_model_vs_own_sample_like_null():
    p = random_params(np.random.default_rng(4), 2, 2, True)
    data = sample(p, 500, 99)
    mean, std = ff_model_vs_data(p, data, repeats=10, seed=0)
    assert mean < 2.5 and std > 0


def test_repeats_one_zero_std_and_pushed():
    p = random_params(np.random.default_rng(5), 2, 2, False)
    amap = AffineMap([[3.0, 0.0], [1.0, 0.5]], [10.0, -4.0])
    d = affine_pushforward(p, amap)
    data = d.sample(300, 1)
    mean, std = ff_model_vs_data(d, data, repeats=1, seed=0)
    assert std == 0.0 and mean < 2.5
    assert ff_model_vs_data(d, data, repeats=3, seed=2) == ff_model_vs_data(d, data, repeats=3, seed=2)
    with pytest.raises(TypeError):
        ff_model_vs_data(object(), data)
