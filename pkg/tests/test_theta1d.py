import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thetabm.theta1d import (
    OMEGA_CERTIFIED,
    RecurrenceState,
    ThetaArgs,
    bound_B,
    partial_sums,
    recurrence_step,
    reduce_argument,
    theta_tilde,
    theta_tilde_batch,
)

from conftest import theta_mp

# 40-digit brute-force sum over |n| <= 60, frozen
THETA_05_6 = 1.1123013440852574


def raw(ev):
    v = math.exp(ev.log_value)
    return v, ev.grad_ratio * v, ev.hess_ratio * v


def test_large_omega_only_constant_term():
    ev = theta_tilde(0.0, 200.0)
    assert ev.log_value == pytest.approx(0.0, abs=1e-15)
    assert ev.dlog == 0.0


def test_frozen_value_z05_omega6():
    ref = float(theta_mp(0.5, 6.0)[0])
    assert ref == pytest.approx(THETA_05_6, rel=1e-15)
    assert math.exp(theta_tilde(0.5, 6.0).log_value) == pytest.approx(THETA_05_6, rel=1e-14)


def test_parity_negates_dlog():
    a, b = theta_tilde(0.5, 6.0), theta_tilde(-0.5, 6.0)
    assert a.log_value == b.log_value
    assert a.dlog == -b.dlog
    assert a.d2log == b.d2log


@pytest.mark.parametrize("eps,omega,B", [(1e-10, 6.0, 4), (1e-10, 20.0, 3)])
def test_bound_B_examples(eps, omega, B):
    assert bound_B(eps, omega) == B
    assert 3 * math.exp(-omega * (B - 1) ** 2 / 2) <= eps < 3 * math.exp(-omega * (B - 2) ** 2 / 2)


def test_bound_B_tiny_q():
    assert bound_B(0.5, 100.0) in (1, 2)


def test_reduce_argument_examples():
    assert reduce_argument(7.0, 6.0) == (1.0, 1, 4.0, 1)
    assert reduce_argument(0.0, 3.3) == (0.0, 0, 0.0, 1)
    z_r, k, _, sign = reduce_argument(-1.0, 6.0)
    assert (z_r, k, sign) == (1.0, 0, -1)


def test_reduction_prefactor_matches_brute_force():
    lhs = theta_mp(7.0, 6.0)[0]
    rhs = mpmath.exp(4) * theta_mp(1.0, 6.0)[0]
    assert abs(lhs / rhs - 1) < 1e-30


def test_recurrence_example_z0_omega6():
    st0 = RecurrenceState.start(0.0, 6.0)
    assert float(st0.v) == pytest.approx(2 * math.exp(-3), rel=1e-15)
    st1 = recurrence_step(st0)
    assert float(st1.v) == pytest.approx(2 * math.exp(-12), rel=1e-14)
    assert float(st1.xi) == pytest.approx(8 * math.exp(-12), rel=1e-14)
    s = st1
    for _ in range(5):
        assert float(s.w) == 0.0
        s = recurrence_step(s)


@pytest.mark.parametrize("z", [0.3, -1.7, 2.9])
def test_recurrence_matches_direct_summands(z):
    omega = 6.5
    q = math.exp(-omega / 2)
    s = RecurrenceState.start(z, omega)
    for n in range(1, 7):
        assert float(s.v) == pytest.approx(2 * q ** (n * n) * math.cosh(n * z), rel=1e-12)
        assert float(s.w) == pytest.approx(2 * n * q ** (n * n) * math.sinh(n * z), rel=1e-12)
        assert float(s.xi) == pytest.approx(2 * n * n * q ** (n * n) * math.cosh(n * z), rel=1e-12)
        s = recurrence_step(s)


def test_oracle_equivalence_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        omega = rng.uniform(5.6, 60.0)
        z = rng.uniform(-3 * omega, 3 * omega)
        got = raw(theta_tilde(z, omega))
        ref = [float(x) for x in theta_mp(z, omega)]
        scale = max(1.0, ref[0])
        for g, r in zip(got, ref):
            assert abs(g - r) / scale <= 1e-12


@pytest.mark.parametrize("omega", [0.05, 0.5, 2.0, 4.0, 5.0])
def test_adaptive_below_threshold(omega):
    assert omega < OMEGA_CERTIFIED
    for z in (0.0, 0.4 * omega, -0.49 * omega):
        got = raw(theta_tilde(z, omega))
        ref = [float(x) for x in theta_mp(z, omega, nmax=int(40 / math.sqrt(omega)) + 60)]
        for g, r in zip(got, ref):
            assert abs(g - r) <= 1e-12 * max(1.0, ref[0], abs(r))


def _mp_partial(z, omega, lo, hi):
    """Sums of the paired summands over lo <= n < hi (plus 1 when lo == 0)."""
    z, omega = mpmath.mpf(z), mpmath.mpf(omega)
    S = mpmath.mpf(1 if lo == 0 else 0)
    U, V = mpmath.mpf(0), mpmath.mpf(0)
    for n in range(max(lo, 1), hi):
        e = mpmath.exp(-omega * n * n / 2)
        S += 2 * e * mpmath.cosh(n * z)
        U += 2 * n * e * mpmath.sinh(n * z)
        V += 2 * n * n * e * mpmath.cosh(n * z)
    return S, U, V


def test_bound_certification():
    """Remainders in the trigonometric convention stay within 3 q^((B-1)^2)."""
    rng = np.random.default_rng(2)
    for _ in range(40):
        omega = rng.uniform(OMEGA_CERTIFIED, 40.0)
        z = rng.uniform(0.0, omega / 2)
        for B in range(2, 11):
            # tails summed directly so tiny remainders are not lost to cancellation
            rS, rU, rV = _mp_partial(z, omega, B, 61)
            bound = 3 * mpmath.exp(-omega / 2) ** ((B - 1) ** 2)
            assert rS <= bound
            assert abs(rU) * 2 * mpmath.pi <= bound
            assert rV * 4 * mpmath.pi**2 <= bound
            S, U, V = _mp_partial(z, omega, 0, B)
            # the double-precision recurrences reproduce the exact partial sums
            got = partial_sums(z, omega, B)
            for g, r in zip(got, (S, U, V)):
                assert abs(float(g) - float(r)) <= 1e-14 * max(1.0, abs(float(r)))


@given(st.floats(5.6, 60.0), st.floats(-50.0, 50.0))
@settings(max_examples=200, deadline=None)
def test_finite_differences(omega, z):
    ev = theta_tilde(z, omega)
    h = 1e-5 * max(1.0, abs(z))
    lp, lm = theta_tilde(z + h, omega).log_value, theta_tilde(z - h, omega).log_value
    fd1 = (lp - lm) / (2 * h)
    assert abs(fd1 - ev.dlog) <= 1e-6 * max(1.0, abs(ev.dlog))
    dp, dm = theta_tilde(z + h, omega).dlog, theta_tilde(z - h, omega).dlog
    fd2 = (dp - dm) / (2 * h)
    assert abs(fd2 - ev.d2log) <= 1e-6 * max(1.0, abs(ev.d2log))


@given(st.floats(0.1, 80.0), st.floats(-200.0, 200.0))
@settings(max_examples=200, deadline=None)
def test_parity_and_positivity(omega, z):
    a, b = theta_tilde(z, omega), theta_tilde(-z, omega)
    assert a.log_value == b.log_value and a.dlog == -b.dlog
    assert a.hess_ratio > 0


@given(st.floats(0.5, 40.0), st.floats(-20.0, 20.0))
@settings(max_examples=200, deadline=None)
def test_quasi_periodicity(omega, z):
    lhs = theta_tilde(z + omega, omega).log_value
    rhs = z + omega / 2 + theta_tilde(z, omega).log_value
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_batch_matches_scalar():
    rng = np.random.default_rng(3)
    z = rng.uniform(-30, 30, 50)
    om = rng.uniform(0.3, 30, 50)
    lv, d1, d2 = theta_tilde_batch(z, om)
    for i in range(50):
        ev = theta_tilde(z[i], om[i])
        assert (lv[i], d1[i], d2[i]) == pytest.approx(tuple(ev), rel=1e-14, abs=1e-14)


@pytest.mark.parametrize("kw", [dict(z=math.nan, omega=6.0), dict(z=0.0, omega=math.inf)])
def test_non_finite_rejected(kw):
    with pytest.raises(ValueError):
        ThetaArgs(**kw)
    with pytest.raises(ValueError):
        theta_tilde(kw["z"], kw["omega"])


@pytest.mark.parametrize("omega", [0.0, -1.0])
def test_nonpositive_omega_rejected(omega):
    with pytest.raises(ValueError):
        theta_tilde(0.0, omega)
