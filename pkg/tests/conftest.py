"""Shared oracles: extended-precision brute-force theta sums and random models."""
import itertools

import mpmath
import numpy as np
import pytest

from thetabm.model import RtbmParams, is_feasible

mpmath.mp.dps = 40


def theta_mp(z, omega, nmax=60):
    """Direct sums of theta, theta', theta'' over |n| <= nmax at 40 digits."""
    z = mpmath.mpf(z)
    omega = mpmath.mpf(omega)
    s0 = s1 = s2 = mpmath.mpf(0)
    for n in range(-nmax, nmax + 1):
        t = mpmath.exp(-omega * n * n / 2 + n * z)
        s0 += t
        s1 += n * t
        s2 += n * n * t
    return s0, s1, s2


def rtheta_brute(z, omega, nmax):
    """Lattice box sum of theta and its normalized moments in double precision."""
    z = np.asarray(z, float)
    omega = np.asarray(omega, float)
    k = len(z)
    pts = np.array(list(itertools.product(range(-nmax, nmax + 1), repeat=k)), float)
    e = -0.5 * np.einsum("pi,ij,pj->p", pts, omega, pts) + pts @ z
    m = e.max()
    w = np.exp(e - m)
    tot = w.sum()
    D = (w @ pts) / tot
    H = np.einsum("p,pi,pj->ij", w, pts, pts) / tot
    return m + np.log(tot), D, H


def random_params(rng, n_v, n_h, diagonal_q, w_scale=0.5):
    """A random feasible machine; W is shrunk until the Schur complement is positive."""
    A = rng.normal(size=(n_v, n_v))
    T = A @ A.T / n_v + 0.5 * np.eye(n_v)
    if diagonal_q:
        Q = rng.uniform(2.0, 8.0, n_h)
    else:
        B = rng.normal(size=(n_h, n_h))
        Q = B @ B.T / n_h + rng.uniform(2.0, 6.0) * np.eye(n_h)
    W = rng.normal(scale=w_scale, size=(n_v, n_h))
    bv = rng.normal(scale=0.5, size=n_v)
    bh = rng.normal(scale=0.5, size=n_h)
    while True:
        p = RtbmParams(T, Q, W, bv, bh, diagonal_q)
        if is_feasible(p):
            return p
        W = 0.5 * W


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


#: PASS/FAIL lines from test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
