"""Training objectives.

Both costs are plain sums over the sample rows (no ``1/N``), so values are
comparable only at a fixed sample size. The Fisher cost omits the
data-only constant of the score-matching divergence; its absolute value has
no meaning on its own.

Infeasible parameters, and parameters whose theta sums exceed the lattice
budget, score ``+inf`` instead of raising so a derivative-free optimizer can
discard the candidate and continue.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .model import RtbmParams, is_feasible, log_density, log_normalizer, score_and_laplacian
from .rtheta import LatticeBudgetError
from .samples import Sample
from .theta1d import MAX_TERMS, _one, _truncation

__all__ = ["Sample", "fisher_cost", "fisher_terms", "nll_cost", "TRAIN_EPS"]

#: Kernel precision used during training.
TRAIN_EPS = 1e-10


def _data(s) -> np.ndarray:
    return s.data if isinstance(s, Sample) else np.atleast_2d(np.asarray(s, dtype=float))


@numba.njit(cache=True)
def _fisher_rows_factorized(V, T, bv, W, bh, omega, eps, out):
    """Per-row Fisher terms of a diagonal-Q machine in one pass; returns a failing node or -1.

    score_i = -(T v)_i - bv_i + sum_j W_ij dlog_j
    lap_i   = -T_ii + sum_j W_ij^2 d2log_j
    """
    M, n_v = V.shape
    n_h = W.shape[1]
    Bs = np.empty(n_h, dtype=np.int64)
    for j in range(n_h):
        Bs[j] = _truncation(omega[j], eps)
    tr = 0.0
    for i in range(n_v):
        tr += T[i, i]
    buf = np.empty((3, n_h))
    for m in range(M):
        for j in range(n_h):
            z = bh[j]
            for i in range(n_v):
                z += V[m, i] * W[i, j]
            if not _one(z, omega[j], eps, Bs[j], buf, j):
                return j
        acc = -2.0 * tr
        for i in range(n_v):
            sc = -bv[i]
            for c in range(n_v):
                sc -= T[i, c] * V[m, c]
            lap = 0.0
            for j in range(n_h):
                sc += W[i, j] * buf[1, j]
                lap += W[i, j] * W[i, j] * buf[2, j]
            acc += sc * sc + 2.0 * lap
        out[m] = acc
    return -1


def fisher_terms(p: RtbmParams, s, eps: float = TRAIN_EPS) -> np.ndarray:
    """Per-row ``|grad log q|^2 + 2 laplacian log q``.

    Diagonal-``Q`` machines go through a fused compiled loop over rows; the
    general machine goes through :func:`~thetabm.model.score_and_laplacian`.
    """
    V = _data(s)
    if not p.diagonal_q:
        sc, lap = score_and_laplacian(p, V, eps)
        return np.sum(sc * sc, axis=1) + 2.0 * np.sum(lap, axis=1)
    if V.shape[1] != p.n_v:
        raise ValueError(f"expected {p.n_v} visible coordinates, got {V.shape[1]}")
    out = np.empty(len(V))
    bad = _fisher_rows_factorized(np.ascontiguousarray(V, dtype=float), p.T, p.bv, p.W, p.bh, p.Q, float(eps), out)
    if bad >= 0:
        raise ValueError(f"theta series did not converge within {MAX_TERMS} terms (omega={p.Q[bad]:.3g})")
    return out


def fisher_cost(p: RtbmParams, s, eps: float = TRAIN_EPS) -> float:
    """Score-matching cost ``sum_i |grad log q(v_i)|^2 + 2 laplacian log q(v_i)``.

    Never touches the normalizing theta function.
    """
    if not is_feasible(p):
        return math.inf
    try:
        total = float(np.sum(fisher_terms(p, s, eps)))
    except (LatticeBudgetError, ValueError):
        return math.inf
    return total if math.isfinite(total) else math.inf


def nll_cost(p: RtbmParams, s, eps: float = TRAIN_EPS) -> float:
    """Negative log-likelihood ``-sum_i log P(v_i)``; the normalizer is computed once."""
    if not is_feasible(p):
        return math.inf
    try:
        log_norm = log_normalizer(p, eps)
        total = -float(np.sum(log_density(p, _data(s), eps, log_norm=log_norm)))
    except (LatticeBudgetError, ValueError):
        return math.inf
    return total if math.isfinite(total) else math.inf
