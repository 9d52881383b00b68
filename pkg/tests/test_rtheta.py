import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thetabm.rtheta import (
    LatticeBudgetError,
    RtArgs,
    bench_factorized_vs_full,
    enumerate_ellipsoid,
    lattice_radius,
    lattice_size,
    loglog_slope,
    rt_eval_factorized,
    rt_eval_factorized_batch,
    rt_eval_full,
    rt_eval_full_batch,
)
from thetabm.theta1d import theta_tilde

from conftest import rtheta_brute

# brute force over |n_i| <= 10, frozen
THETA_2D_COUPLED = 1.21448171930405


def random_spd(rng, k, lo=1.0):
    A = rng.normal(size=(k, k))
    return A @ A.T / k + rng.uniform(lo, lo + 5.0) * np.eye(k)


def test_large_omega_trivial():
    for k in (1, 3):
        r = rt_eval_full(np.zeros(k), 200.0 * np.eye(k))
        assert r.log_value == pytest.approx(0.0, abs=1e-15)
        assert np.all(r.grad_norm == 0.0)
        assert np.allclose(r.hess_norm, 0.0, atol=1e-40)


def test_coupled_2d_value():
    omega = np.array([[6.0, 1.0], [1.0, 6.0]])
    ref, _, _ = rtheta_brute([0.0, 0.0], omega, 10)
    assert math.exp(ref) == pytest.approx(THETA_2D_COUPLED, rel=1e-14)
    assert math.exp(rt_eval_full([0.0, 0.0], omega).log_value) == pytest.approx(THETA_2D_COUPLED, rel=1e-13)


def test_diag_product_of_1d():
    z = np.array([0.5, -0.2])
    r = rt_eval_full(z, np.diag([6.0, 8.0]))
    want = theta_tilde(0.5, 6.0).log_value + theta_tilde(-0.2, 8.0).log_value
    assert r.log_value == pytest.approx(want, abs=1e-14)


def test_factorized_example_diag66():
    r = rt_eval_factorized([0.0, 0.0], [6.0, 6.0])
    # the three-term sum drops 2e^-27 per factor
    assert r.log_value == pytest.approx(2 * math.log(1 + 2 * math.exp(-3) + 2 * math.exp(-12)), abs=1e-10)
    exact = 2 * math.log(1 + 2 * sum(math.exp(-3 * n * n) for n in range(1, 6)))
    assert r.log_value == pytest.approx(exact, abs=1e-15)
    assert math.exp(r.log_value / 2) == pytest.approx(1.0995865, abs=1e-7)


def test_factorized_n1_matches_theta1d():
    ev = theta_tilde(1.3, 4.2)
    r = rt_eval_factorized([1.3], [4.2])
    assert r.log_value == ev.log_value
    assert r.grad_norm[0] == ev.dlog
    assert r.hess_norm[0, 0] == pytest.approx(ev.hess_ratio, rel=1e-15)


def test_factorized_agrees_with_full():
    rng = np.random.default_rng(4)
    for _ in range(50):
        k = int(rng.integers(1, 5))
        om = rng.uniform(0.5, 12.0, k)
        z = rng.normal(scale=3.0, size=k)
        a, b = rt_eval_full(z, np.diag(om)), rt_eval_factorized(z, om)
        assert abs(a.log_value - b.log_value) <= 1e-10
        assert np.max(np.abs(a.grad_norm - b.grad_norm)) <= 1e-10
        assert np.max(np.abs(a.hess_norm - b.hess_norm)) <= 1e-10 * max(1.0, np.max(np.abs(a.hess_norm)))


def test_factorized_log_hessian_diagonal():
    r = rt_eval_factorized([0.3, -1.2, 2.0], [3.0, 5.0, 7.0])
    C = r.hess_norm - np.outer(r.grad_norm, r.grad_norm)
    assert np.max(np.abs(C - np.diag(np.diag(C)))) <= 1e-14


def test_full_matches_brute_force_coupled():
    rng = np.random.default_rng(5)
    for _ in range(20):
        k = int(rng.integers(1, 4))
        omega = random_spd(rng, k, lo=1.5)
        z = rng.normal(scale=2.0, size=k)
        lv, D, H = rtheta_brute(z, omega, 14)
        r = rt_eval_full(z, omega)
        assert r.log_value == pytest.approx(lv, abs=1e-12)
        assert np.allclose(r.grad_norm, D, atol=1e-11)
        assert np.allclose(r.hess_norm, H, atol=1e-10)


def test_batch_equals_single_rows():
    rng = np.random.default_rng(6)
    omega = random_spd(rng, 3)
    Z = rng.normal(scale=4.0, size=(25, 3))
    lv, D, H = rt_eval_full_batch(Z, omega)
    for i in range(len(Z)):
        r = rt_eval_full(Z[i], omega)
        assert lv[i] == pytest.approx(r.log_value, abs=1e-11)
        assert np.allclose(D[i], r.grad_norm, atol=1e-11)
        assert np.allclose(H[i], r.hess_norm, atol=1e-9, rtol=1e-11)


def test_factorized_batch_rows():
    rng = np.random.default_rng(7)
    om = rng.uniform(1.0, 9.0, 3)
    Z = rng.normal(scale=3.0, size=(10, 3))
    lv, d1, d2 = rt_eval_factorized_batch(Z, om)
    for i in range(10):
        r = rt_eval_factorized(Z[i], om)
        assert lv[i] == pytest.approx(r.log_value, abs=1e-13)
        assert np.allclose(np.diag(d2[i]) + np.outer(d1[i], d1[i]), r.hess_norm, atol=1e-13)


def test_finite_differences_coupled():
    rng = np.random.default_rng(8)
    for _ in range(10):
        k = int(rng.integers(1, 4))
        omega = random_spd(rng, k)
        z = rng.normal(size=k)
        r = rt_eval_full(z, omega)
        h = 1e-5
        for i in range(k):
            e = np.zeros(k)
            e[i] = h
            fp, fm = rt_eval_full(z + e, omega), rt_eval_full(z - e, omega)
            fd = (fp.log_value - fm.log_value) / (2 * h)
            assert abs(fd - r.grad_norm[i]) <= 1e-6 * max(1.0, abs(fd))
            fd2 = (fp.grad_norm - fm.grad_norm) / (2 * h)
            want = r.hess_norm[i] - r.grad_norm[i] * r.grad_norm
            assert np.max(np.abs(fd2 - want)) <= 1e-6 * max(1.0, np.max(np.abs(want)))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_evenness_and_quasi_periodicity(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    omega = random_spd(rng, k)
    z = rng.normal(scale=2.0, size=k)
    a, b = rt_eval_full(z, omega), rt_eval_full(-z, omega)
    assert a.log_value == pytest.approx(b.log_value, abs=1e-12)
    assert np.allclose(a.grad_norm, -b.grad_norm, atol=1e-11)
    m = rng.integers(-2, 3, size=k).astype(float)
    c = rt_eval_full(z + omega @ m, omega)
    assert c.log_value == pytest.approx(a.log_value + m @ z + 0.5 * m @ omega @ m, abs=1e-10)


def test_lattice_count_monotone_in_eps():
    omega = np.array([[2.0, 0.3], [0.3, 1.5]])
    sizes = [lattice_size(omega, e) for e in (1e-4, 1e-8, 1e-12, 1e-16)]
    assert sizes == sorted(sizes)
    assert lattice_radius(1e-12, 3) > lattice_radius(1e-6, 3)


def test_enumeration_matches_box_filter():
    rng = np.random.default_rng(9)
    omega = random_spd(rng, 3, lo=0.5)
    c = rng.normal(size=3)
    R = 3.0
    pts = enumerate_ellipsoid(omega, R, c)
    g = np.arange(-12, 13)
    box = np.array(np.meshgrid(g, g, g, indexing="ij")).reshape(3, -1).T
    d = box - c
    inside = box[np.einsum("pi,ij,pj->p", d, omega, d) <= R * R]
    assert {tuple(p) for p in pts} == {tuple(p) for p in inside}


def test_budget_error_names_budget():
    with pytest.raises(LatticeBudgetError, match="max_points=50"):
        rt_eval_full(np.zeros(4), 0.05 * np.eye(4), max_points=50)


@pytest.mark.parametrize(
    "z,omega",
    [([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]]), ([0.0, 0.0], [[1.0, 0.5], [0.4, 1.0]]), ([0.0], [[1.0, 0.0], [0.0, 1.0]])],
)
def test_invalid_args(z, omega):
    with pytest.raises(ValueError):
        RtArgs(np.array(z), np.array(omega))


def test_loglog_slope_exact():
    x = np.array([1, 2, 4, 8.0])
    s, r2 = loglog_slope(x, 3 * x**1.5)
    assert s == pytest.approx(1.5) and r2 == pytest.approx(1.0)


def test_bench_rows_shape():
    rows = bench_factorized_vs_full([1, 2, 3], repeats=2, max_full_dim=2)
    assert [(r["dim"], r["path"]) for r in rows] == [
        (1, "factorized"), (1, "full"), (2, "factorized"), (2, "full"), (3, "factorized")]
    d1 = {r["path"]: r["mean_seconds"] for r in rows if r["dim"] == 1}
    assert 0.1 < d1["full"] / d1["factorized"] < 10
