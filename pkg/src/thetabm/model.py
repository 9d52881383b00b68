"""Riemann-Theta Boltzmann machine parameters and the quantities derived from them.

The energy of a joint state ``x = (h, v)`` is ``x^T A x / 2 + B^T x`` with

    A = [[Q, W^T], [W, T]],   B = (B_h, B_v),

visible units ``v`` real and hidden units ``h`` integer. Summing out ``h``
gives a closed-form visible density whose hidden-sector factor is a ratio of
rescaled Riemann-Theta functions::

    log P(v) = log N(v; -T^{-1} B_v, T^{-1})
               + log theta(B_h + W^T v | Q)
               - log theta(B_h - W^T T^{-1} B_v | Q - W^T T^{-1} W)

With diagonal ``Q`` (the product Jacobi-Theta machine) the numerator factors
into one-dimensional thetas. The denominator does not; it is only needed when
the normalized density is, never for the score.

Shapes: ``T`` is ``(n_v, n_v)``, ``Q`` is ``(n_h, n_h)`` (or ``(n_h,)`` when
``diagonal_q``), ``W`` is ``(n_v, n_h)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .preprocess import AffineMap
from .rtheta import (
    DEFAULT_MAX_POINTS,
    enumerate_ellipsoid,
    lattice_radius,
    rt_eval_factorized_batch,
    rt_eval_full_batch,
)
from .theta1d import DEFAULT_EPS

__all__ = [
    "InfeasibleParamsError",
    "RtbmParams",
    "count_params",
    "pack",
    "unpack",
    "is_feasible",
    "energy",
    "log_density",
    "log_normalizer",
    "score",
    "laplacian_terms",
    "score_factorized",
    "laplacian_factorized",
    "score_and_laplacian",
    "hidden_distribution",
    "mixture_log_density",
    "sample",
    "PushedDensity",
    "affine_pushforward",
    "params_to_dict",
    "params_from_dict",
    "save_model",
    "load_model",
]

LOG_2PI = math.log(2.0 * math.pi)


class InfeasibleParamsError(ValueError):
    """T, Q or the Schur complement Q - W^T T^{-1} W is not positive definite."""


@dataclass(frozen=True, eq=False)
class RtbmParams:
    T: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    bv: np.ndarray
    bh: np.ndarray
    diagonal_q: bool = False

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        bv = np.atleast_1d(np.asarray(self.bv, dtype=float))
        bh = np.atleast_1d(np.asarray(self.bh, dtype=float))
        Q = np.asarray(self.Q, dtype=float)
        n_v, n_h = W.shape
        if self.diagonal_q:
            Q = np.atleast_1d(Q)
            if Q.ndim == 2:
                if np.any(Q - np.diag(np.diag(Q))):
                    raise ValueError("diagonal_q=True but Q has off-diagonal entries")
                Q = np.diag(Q).copy()
            expected_q = (n_h,)
        else:
            Q = np.atleast_2d(Q)
            expected_q = (n_h, n_h)
        if T.shape != (n_v, n_v) or Q.shape != expected_q or bv.shape != (n_v,) or bh.shape != (n_h,):
            raise ValueError(
                f"inconsistent shapes: T {T.shape}, Q {Q.shape}, W {W.shape}, "
                f"B_v {bv.shape}, B_h {bh.shape}"
            )
        for name, arr in (("T", T), ("Q", Q), ("W", W), ("B_v", bv), ("B_h", bh)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "bv", bv)
        object.__setattr__(self, "bh", bh)

    @property
    def n_v(self) -> int:
        return self.W.shape[0]

    @property
    def n_h(self) -> int:
        return self.W.shape[1]

    @property
    def Q_matrix(self) -> np.ndarray:
        return np.diag(self.Q) if self.diagonal_q else self.Q

    @property
    def A(self) -> np.ndarray:
        """Full connection matrix with hidden units first."""
        return np.block([[self.Q_matrix, self.W.T], [self.W, self.T]])

    def schur(self) -> np.ndarray:
        """``Q - W^T T^{-1} W``, the denominator theta's quadratic form."""
        S = self.Q_matrix - self.W.T @ np.linalg.solve(self.T, self.W)
        return 0.5 * (S + S.T)

    def as_rtbm(self) -> "RtbmParams":
        """Same model with ``Q`` stored as a full matrix."""
        return RtbmParams(self.T, self.Q_matrix, self.W, self.bv, self.bh, False)


def count_params(n_v: int, n_h: int, diagonal_q: bool) -> int:
    if n_v < 1 or n_h < 1:
        raise ValueError("n_v and n_h must be at least 1")
    q = n_h if diagonal_q else n_h * (n_h + 1) // 2
    return n_v * (n_v + 1) // 2 + n_v + n_v * n_h + n_h + q


def pack(p: RtbmParams) -> np.ndarray:
    """Flatten as (lower(T), diag(Q) or lower(Q), W row-major, B_v, B_h)."""
    tl = p.T[np.tril_indices(p.n_v)]
    ql = p.Q if p.diagonal_q else p.Q[np.tril_indices(p.n_h)]
    return np.concatenate([tl, ql, p.W.ravel(), p.bv, p.bh])


def unpack(x, n_v: int, n_h: int, diagonal_q: bool) -> RtbmParams:
    x = np.asarray(x, dtype=float)
    if x.shape != (count_params(n_v, n_h, diagonal_q),):
        raise ValueError(f"expected {count_params(n_v, n_h, diagonal_q)} parameters, got {x.shape}")

    def sym(vals, n):
        M = np.zeros((n, n))
        M[np.tril_indices(n)] = vals
        return M + np.tril(M, -1).T

    i = n_v * (n_v + 1) // 2
    T = sym(x[:i], n_v)
    nq = n_h if diagonal_q else n_h * (n_h + 1) // 2
    Q = x[i:i + nq].copy() if diagonal_q else sym(x[i:i + nq], n_h)
    i += nq
    W = x[i:i + n_v * n_h].reshape(n_v, n_h)
    i += n_v * n_h
    bv = x[i:i + n_v]
    bh = x[i + n_v:]
    return RtbmParams(T, Q, W, bv, bh, diagonal_q)


def _is_pd(M: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def is_feasible(p: RtbmParams) -> bool:
    if not _is_pd(p.T):
        return False
    if p.diagonal_q:
        if np.any(p.Q <= 0.0):
            return False
    elif not _is_pd(p.Q):
        return False
    return _is_pd(p.schur())


def _require_feasible(p: RtbmParams):
    if not is_feasible(p):
        raise InfeasibleParamsError("parameters are infeasible: need T > 0, Q > 0 and Q - W^T T^-1 W > 0")


def _rows(p: RtbmParams, v) -> np.ndarray:
    V = np.asarray(v, dtype=float)
    V = V.reshape(-1, p.n_v) if V.ndim < 2 else V
    if V.shape[1] != p.n_v:
        raise ValueError(f"expected {p.n_v} visible coordinates, got {V.shape[1]}")
    return V


def _squeeze(out, v):
    return out[0] if np.ndim(v) < 2 else out


def energy(p: RtbmParams, v, h) -> float:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if v.shape != (p.n_v,) or h.shape != (p.n_h,):
        raise ValueError(f"expected v of length {p.n_v} and h of length {p.n_h}")
    x = np.concatenate([h, v])
    B = np.concatenate([p.bh, p.bv])
    return float(0.5 * x @ p.A @ x + B @ x)


def _numerator(p: RtbmParams, V, eps, derivatives, factorized):
    Z = p.bh + V @ p.W
    if factorized:
        return rt_eval_factorized_batch(Z, p.Q, eps, derivatives=derivatives)
    return rt_eval_full_batch(Z, p.Q_matrix, eps, derivatives=derivatives, max_points=DEFAULT_MAX_POINTS)


def log_normalizer(p: RtbmParams, eps: float = DEFAULT_EPS, max_points: int = DEFAULT_MAX_POINTS) -> float:
    """``log theta(B_h - W^T T^{-1} B_v | Q - W^T T^{-1} W)``, independent of ``v``."""
    _require_feasible(p)
    z = p.bh - p.W.T @ np.linalg.solve(p.T, p.bv)
    lv, _, _ = rt_eval_full_batch(z[None, :], p.schur(), eps, derivatives=False, max_points=max_points)
    return float(lv[0])


def _gaussian_part(p: RtbmParams, V):
    mean = -np.linalg.solve(p.T, p.bv)
    Y = V - mean
    _, logdet = np.linalg.slogdet(p.T)
    return 0.5 * logdet - 0.5 * p.n_v * LOG_2PI - 0.5 * np.einsum("mi,ij,mj->m", Y, p.T, Y)


def log_density(p: RtbmParams, v, eps: float = DEFAULT_EPS, log_norm: float | None = None):
    """Normalized visible log-density at one point ``(n_v,)`` or rows ``(M, n_v)``.

    ``log_norm`` may carry a precomputed :func:`log_normalizer` value.
    """
    _require_feasible(p)
    V = _rows(p, v)
    if log_norm is None:
        log_norm = log_normalizer(p, eps)
    num, _, _ = _numerator(p, V, eps, False, p.diagonal_q)
    return _squeeze(_gaussian_part(p, V) + num - log_norm, v)


def score(p: RtbmParams, v, eps: float = DEFAULT_EPS):
    """``grad_v log P(v) = -T v - B_v + W D`` through the general lattice path."""
    _require_feasible(p)
    V = _rows(p, v)
    _, D, _ = _numerator(p, V, eps, True, False)
    return _squeeze(-V @ p.T - p.bv + D @ p.W.T, v)


def laplacian_terms(p: RtbmParams, v, eps: float = DEFAULT_EPS):
    """Per-coordinate ``d^2/dv_i^2 log P(v) = -T_ii + (W (H - D D^T) W^T)_ii``."""
    _require_feasible(p)
    V = _rows(p, v)
    _, D, H = _numerator(p, V, eps, True, False)
    C = H - D[:, :, None] * D[:, None, :]
    return _squeeze(-np.diag(p.T) + np.einsum("ij,mjk,ik->mi", p.W, C, p.W), v)


def _require_diagonal(p: RtbmParams):
    if not p.diagonal_q:
        raise TypeError("factorized score/laplacian need diagonal_q=True")


def score_factorized(p: RtbmParams, v, eps: float = DEFAULT_EPS):
    """Score through per-node 1-D thetas: ``-T v - B_v + sum_j dlog_j W[:, j]``."""
    _require_diagonal(p)
    _require_feasible(p)
    V = _rows(p, v)
    _, d1, _ = _numerator(p, V, eps, True, True)
    return _squeeze(-V @ p.T - p.bv + d1 @ p.W.T, v)


def laplacian_factorized(p: RtbmParams, v, eps: float = DEFAULT_EPS):
    """``-T_ii + sum_j d2log_j W_ij^2`` with ``d2log_j`` the log-theta curvature of node ``j``."""
    _require_diagonal(p)
    _require_feasible(p)
    V = _rows(p, v)
    _, _, d2 = _numerator(p, V, eps, True, True)
    return _squeeze(-np.diag(p.T) + d2 @ (p.W**2).T, v)


def score_and_laplacian(p: RtbmParams, V, eps: float = DEFAULT_EPS):
    """Score rows and per-coordinate Laplacian rows in one theta pass.

    Uses the factorized kernels when ``Q`` is diagonal. Feasibility is the
    caller's responsibility.
    """
    V = _rows(p, V)
    lin = -V @ p.T - p.bv
    if p.diagonal_q:
        _, d1, d2 = _numerator(p, V, eps, True, True)
        return lin + d1 @ p.W.T, -np.diag(p.T) + d2 @ (p.W**2).T
    _, D, H = _numerator(p, V, eps, True, False)
    C = H - D[:, :, None] * D[:, None, :]
    return lin + D @ p.W.T, -np.diag(p.T) + np.einsum("ij,mjk,ik->mi", p.W, C, p.W)


def hidden_distribution(p: RtbmParams, eps: float = 1e-10, max_points: int = DEFAULT_MAX_POINTS):
    """Hidden lattice states and their marginal log-probabilities.

    ``P(h)`` is proportional to ``exp(-h^T S h / 2 - h^T b)`` with ``S`` the
    Schur complement and ``b = B_h - W^T T^{-1} B_v``; the states cover all
    but about ``eps`` of the mass.
    """
    _require_feasible(p)
    S = p.schur()
    b = p.bh - p.W.T @ np.linalg.solve(p.T, p.bv)
    center = np.linalg.solve(S, -b)
    states = enumerate_ellipsoid(S, lattice_radius(eps, p.n_h), center, max_points)
    hs = states.astype(float)
    logw = -0.5 * np.einsum("pi,ij,pj->p", hs, S, hs) - hs @ b
    return states, logw - logsumexp(logw)


def _conditional_means(p: RtbmParams, states) -> np.ndarray:
    return -np.linalg.solve(p.T, (states @ p.W.T + p.bv).T).T


def mixture_log_density(p: RtbmParams, v, eps: float = 1e-10):
    """``log sum_h P(h) N(v; -T^{-1}(W h + B_v), T^{-1})`` over the truncated hidden states."""
    V = _rows(p, v)
    states, logp = hidden_distribution(p, eps)
    means = _conditional_means(p, states.astype(float))
    _, logdet = np.linalg.slogdet(p.T)
    diff = V[:, None, :] - means[None, :, :]
    quad = np.einsum("mpi,ij,mpj->mp", diff, p.T, diff)
    comp = 0.5 * logdet - 0.5 * p.n_v * LOG_2PI - 0.5 * quad
    return _squeeze(logsumexp(comp + logp[None, :], axis=1), v)


def sample(p: RtbmParams, n: int, rng=None, eps: float = 1e-10) -> np.ndarray:
    """Draw ``n`` visible vectors: ``h ~ P(h)`` then ``v | h ~ N(-T^{-1}(W h + B_v), T^{-1})``.

    ``rng`` is a seed or a :class:`numpy.random.Generator`.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(rng)
    states, logp = hidden_distribution(p, eps)
    probs = np.exp(logp)
    idx = rng.choice(len(states), size=n, p=probs / probs.sum())
    means = _conditional_means(p, states[idx].astype(float))
    L = np.linalg.cholesky(p.T)
    # T = L L^T, so L^{-T} e has covariance T^{-1}
    noise = np.linalg.solve(L.T, rng.standard_normal((p.n_v, n))).T
    return means + noise


@dataclass(frozen=True, eq=False)
class PushedDensity:
    """The law of ``amap(v)`` for ``v`` drawn from the machine ``params``."""

    params: RtbmParams
    amap: AffineMap

    def log_density(self, y, eps: float = DEFAULT_EPS):
        x = self.amap.inverse()(np.asarray(y, dtype=float))
        return log_density(self.params, x, eps) - self.amap.log_abs_det

    def sample(self, n: int, rng=None) -> np.ndarray:
        return self.amap(sample(self.params, n, rng))


def affine_pushforward(density, amap: AffineMap) -> PushedDensity:
    """Push a machine (or an already pushed density) through ``amap``."""
    if isinstance(density, PushedDensity):
        return PushedDensity(density.params, density.amap.then(amap))
    return PushedDensity(density, amap)


def params_to_dict(p: RtbmParams, preprocessing: AffineMap | None = None) -> dict:
    d = {
        "n_v": p.n_v,
        "n_h": p.n_h,
        "diagonal_q": p.diagonal_q,
        "t_lower": p.T[np.tril_indices(p.n_v)].tolist(),
        "q": (p.Q if p.diagonal_q else p.Q[np.tril_indices(p.n_h)]).tolist(),
        "w": p.W.tolist(),
        "b_v": p.bv.tolist(),
        "b_h": p.bh.tolist(),
        "preprocessing": None if preprocessing is None else preprocessing.to_dict(),
    }
    return d


def params_from_dict(d: dict) -> tuple[RtbmParams, AffineMap | None]:
    n_v, n_h, diag = int(d["n_v"]), int(d["n_h"]), bool(d["diagonal_q"])
    flat = np.concatenate([
        np.asarray(d["t_lower"], float), np.asarray(d["q"], float),
        np.asarray(d["w"], float).ravel(), np.asarray(d["b_v"], float), np.asarray(d["b_h"], float),
    ])
    pre = d.get("preprocessing")
    return unpack(flat, n_v, n_h, diag), (None if pre is None else AffineMap.from_dict(pre))


def save_model(path, p: RtbmParams, preprocessing: AffineMap | None = None, **extra) -> None:
    d = params_to_dict(p, preprocessing)
    d.update(extra)
    Path(path).write_text(json.dumps(d, indent=2))


def load_model(path) -> tuple[RtbmParams, AffineMap | None]:
    return params_from_dict(json.loads(Path(path).read_text()))
