"""Multi-dimensional rescaled Riemann-Theta function.

``theta(z|Omega) = sum_{n in Z^k} exp(-n^T Omega n / 2 + n^T z)`` for real ``z``
and real symmetric positive-definite ``Omega``. Alongside the log value the
evaluators return the normalized gradient ``D = grad theta / theta`` and the
normalized Hessian ``H = hess theta / theta``.

The general path sums over the lattice points inside an ellipsoid around the
continuous maximizer ``Omega^{-1} z``; the factorized path handles diagonal
``Omega`` as a product of one-dimensional kernels.
"""
from __future__ import annotations

import math
import time
from functools import lru_cache
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .theta1d import DEFAULT_EPS, _columns_unchecked, theta_tilde

__all__ = [
    "DEFAULT_MAX_POINTS",
    "LatticeBudgetError",
    "RtArgs",
    "RtEval",
    "enumerate_ellipsoid",
    "lattice_radius",
    "lattice_size",
    "rt_eval_full",
    "rt_eval_full_batch",
    "rt_eval_factorized",
    "rt_eval_factorized_batch",
    "bench_factorized_vs_full",
    "bench_derivatives",
    "loglog_slope",
]

DEFAULT_MAX_POINTS = 2_000_000


class LatticeBudgetError(RuntimeError):
    """The truncation ellipsoid holds more lattice points than allowed."""


def _check_spd(omega: np.ndarray) -> np.ndarray:
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ValueError(f"Omega must be square, got shape {omega.shape}")
    if not np.all(np.isfinite(omega)):
        raise ValueError("Omega must be finite")
    if np.max(np.abs(omega - omega.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(omega))):
        raise ValueError("Omega must be symmetric")
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise ValueError("Omega must be positive definite") from None
    return omega


@dataclass(frozen=True)
class RtArgs:
    z: np.ndarray
    omega: np.ndarray
    eps: float = DEFAULT_EPS
    max_points: int = field(default=DEFAULT_MAX_POINTS)

    def __post_init__(self):
        omega = _check_spd(self.omega)
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if z.shape != (omega.shape[0],):
            raise ValueError(f"z has shape {z.shape}, expected ({omega.shape[0]},)")
        if not np.all(np.isfinite(z)):
            raise ValueError("z must be finite")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps!r}")
        object.__setattr__(self, "omega", 0.5 * (omega + omega.T))
        object.__setattr__(self, "z", z)


class RtEval(NamedTuple):
    log_value: float
    grad_norm: np.ndarray
    hess_norm: np.ndarray


@lru_cache(maxsize=256)
def lattice_radius(eps: float, dim: int) -> float:
    """Truncation radius in the ``Omega``-norm.

    Chosen so the Gaussian mass (weighted by up to two lattice moments) beyond
    the ellipsoid is below ``eps``: the ``chi^2_{dim+2}`` upper quantile.
    """
    return math.sqrt(stats.chi2.isf(eps, dim + 2))


def enumerate_ellipsoid(omega, radius: float, center=None, max_points: int = DEFAULT_MAX_POINTS):
    """All integer ``n`` with ``(n - c)^T Omega (n - c) <= radius^2``.

    Coordinates are fixed from last to first using the upper Cholesky factor,
    so every partial point already satisfies its share of the constraint.

    Returns
    -------
    ndarray of int64, shape (P, k)
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    k = omega.shape[0]
    c = np.zeros(k) if center is None else np.asarray(center, dtype=float)
    U = np.linalg.cholesky(omega).T  # omega = U^T U, U upper triangular
    r2 = radius * radius

    pts = np.zeros((1, 0), dtype=np.int64)  # coordinates i+1..k-1, filled right to left
    rem = np.array([r2])
    for i in range(k - 1, -1, -1):
        uii = U[i, i]
        if pts.shape[1]:
            shift = (pts - c[i + 1:]) @ U[i, i + 1:] / uii
        else:
            shift = np.zeros(len(pts))
        mid = c[i] - shift
        half = np.sqrt(np.maximum(rem, 0.0)) / uii
        lo = np.ceil(mid - half).astype(np.int64)
        hi = np.floor(mid + half).astype(np.int64)
        counts = np.maximum(hi - lo + 1, 0)
        total = int(counts.sum())
        if total > max_points:
            raise LatticeBudgetError(
                f"lattice truncation needs more than max_points={max_points} points "
                f"(dimension {k}, radius {radius:.3g})"
            )
        parent = np.repeat(np.arange(len(pts)), counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        ni = lo[parent] + offsets
        t = uii * (ni - mid[parent])
        rem = rem[parent] - t * t
        pts = np.column_stack([ni, pts[parent]])
        keep = rem >= -1e-12 * r2
        pts, rem = pts[keep], rem[keep]
    return pts


def lattice_size(omega, eps: float = DEFAULT_EPS) -> int:
    """Number of points the general path sums at ``z = 0``."""
    omega = _check_spd(omega)
    return len(enumerate_ellipsoid(omega, lattice_radius(eps, omega.shape[0])))


def rt_eval_full_batch(Z, omega, eps: float = DEFAULT_EPS, *, derivatives: bool = True,
                       max_points: int = DEFAULT_MAX_POINTS):
    """Evaluate the general path for many arguments sharing one ``Omega``.

    Each row of ``Z`` is first reduced by the quasi-periodicity
    ``theta(z + Omega m) = exp(m^T z + m^T Omega m / 2) theta(z)`` so its
    maximizer lies in the unit cube around the origin; all rows then share
    one lattice set whose radius is enlarged to cover that cube.

    Returns
    -------
    log_value : ndarray (M,)
    D : ndarray (M, k) or None
    H : ndarray (M, k, k) or None
    """
    omega = _check_spd(omega)
    omega = 0.5 * (omega + omega.T)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    k = omega.shape[0]
    if Z.shape[1] != k:
        raise ValueError(f"z has {Z.shape[1]} columns, Omega is {k}x{k}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("z must be finite")

    centers = np.linalg.solve(omega, Z.T).T
    m = np.rint(centers)
    Zr = Z - m @ omega
    radius = lattice_radius(eps, k)
    if len(Z) == 1:
        pts = enumerate_ellipsoid(omega, radius, centers[0] - m[0], max_points)
    else:
        lam_max = float(np.linalg.eigvalsh(omega)[-1])
        cover = 0.5 * min(math.sqrt(k * lam_max), float(np.sum(np.sqrt(np.diag(omega)))))
        pts = enumerate_ellipsoid(omega, radius + cover, None, max_points)
    n = pts.astype(float)
    quad = 0.5 * np.einsum("pi,ij,pj->p", n, omega, n)
    expo = Zr @ n.T - quad  # (M, P)
    top = expo.max(axis=1)
    w = np.exp(expo - top[:, None])
    tot = w.sum(axis=1)
    log_r = top + np.log(tot)
    log_value = log_r + np.sum(m * Zr, axis=1) + 0.5 * np.einsum("mi,ij,mj->m", m, omega, m)
    if not derivatives:
        return log_value, None, None
    w /= tot[:, None]
    Dr = w @ n
    Hr = np.einsum("mp,pi,pj->mij", w, n, n)
    D = Dr + m
    H = Hr - Dr[:, :, None] * Dr[:, None, :] + D[:, :, None] * D[:, None, :]
    return log_value, D, H


def rt_eval_full(z, omega, eps: float = DEFAULT_EPS, max_points: int = DEFAULT_MAX_POINTS) -> RtEval:
    """General lattice-sum evaluation at a single argument."""
    args = RtArgs(z, omega, eps, max_points)
    lv, D, H = rt_eval_full_batch(args.z[None, :], args.omega, args.eps, max_points=args.max_points)
    return RtEval(float(lv[0]), D[0], H[0])


def rt_eval_factorized(z, omega_diag, eps: float = DEFAULT_EPS) -> RtEval:
    """Product form for diagonal ``Omega``: one 1-D kernel call per coordinate.

    The log-Hessian of a product is diagonal, so ``H = diag(d2log) + D D^T``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    omega_diag = np.atleast_1d(np.asarray(omega_diag, dtype=float))
    if z.shape != omega_diag.shape:
        raise ValueError(f"z {z.shape} and omega_diag {omega_diag.shape} differ in shape")
    log_value = 0.0
    D = np.empty(len(z))
    d2 = np.empty(len(z))
    for j, (zj, oj) in enumerate(zip(z, omega_diag)):
        r = theta_tilde(zj, oj, eps)
        log_value += r.log_value
        D[j] = r.dlog
        d2[j] = r.d2log
    return RtEval(log_value, D, np.diag(d2) + np.outer(D, D))


def rt_eval_factorized_batch(Z, omega_diag, eps: float = DEFAULT_EPS, *, derivatives: bool = True):
    """Vectorized product form over rows of ``Z``, in log-derivative form.

    Returns
    -------
    log_value : ndarray (M,)
    dlog : ndarray (M, k)
        Per-coordinate ``d/dz log theta_j`` (equal to ``D``).
    d2log : ndarray (M, k)
        Per-coordinate ``d2/dz2 log theta_j``, so ``H = diag(d2log) + D D^T``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    omega_diag = np.atleast_1d(np.asarray(omega_diag, dtype=float))
    if Z.shape[1:] != omega_diag.shape:
        raise ValueError(f"Z has {Z.shape[1]} columns, omega_diag has shape {omega_diag.shape}")
    if not (np.isfinite(Z).all() and np.isfinite(omega_diag).all()):
        raise ValueError("theta arguments must be finite")
    if np.any(omega_diag <= 0.0):
        raise ValueError("omega must be positive")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    lv, d1, d2 = _columns_unchecked(Z, omega_diag, float(eps))
    if not derivatives:
        return lv.sum(axis=1), None, None
    return lv.sum(axis=1), d1, d2


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and its ``R^2``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def _time(fn, repeats: int, min_seconds: float = 0.0) -> tuple[float, float]:
    """Mean and std of per-call seconds over ``repeats`` calls of ``fn(i)``.

    A call faster than ``min_seconds`` is looped until the loop takes at
    least that long, to keep timer resolution out of the sub-millisecond rows.
    """
    ts = []
    for i in range(repeats):
        loops, t0 = 0, time.perf_counter()
        while True:
            fn(i)
            loops += 1
            dt = time.perf_counter() - t0
            if dt >= min_seconds:
                break
        ts.append(dt / loops)
    return float(np.mean(ts)), float(np.std(ts))


def bench_factorized_vs_full(dims, repeats: int = 10, seed: int = 0, eps: float = 1e-8,
                             max_full_dim: int = 8):
    """Time the factorized and general paths on random diagonal ``Omega``.

    Diagonal entries are drawn as ``2 pi u`` and arguments as ``u'`` with
    ``u, u'`` uniform on ``(0, 1]``; each repeat draws fresh parameters from a
    generator seeded by ``(seed, dim)``.

    Returns
    -------
    rows : list of dict
        One row per ``(dim, path)`` with ``mean_seconds`` and ``std_seconds``.
    """
    rows = []
    for d in dims:
        rng = np.random.default_rng([seed, d])
        draws = [(1.0 - rng.random(d), 2.0 * math.pi * (1.0 - rng.random(d))) for _ in range(repeats)]
        paths = {"factorized": lambda z, om: rt_eval_factorized(z, om, eps)}
        if d <= max_full_dim:
            paths["full"] = lambda z, om: rt_eval_full(z, np.diag(om), eps)
        for name, fn in paths.items():
            fn(*draws[0])  # warm-up: JIT/cache load and lattice-radius cache
            mean, std = _time(lambda i: fn(*draws[i]), repeats, min_seconds=2e-3)
            rows.append({"dim": d, "path": name, "mean_seconds": mean, "std_seconds": std})
    return rows


def bench_derivatives(n_params: int = 50, repeats: int = 20, seed: int = 0, eps: float = 1e-14):
    """Time the recursive 1-D kernel against the general lattice path at dimension 1.

    Parameters are drawn as ``Omega = 2 pi u`` and ``z = u'`` with ``u, u'``
    uniform on ``(0, 1]``. Both paths return the value and both derivatives.
    """
    rng = np.random.default_rng([seed, 31337])
    rows = []
    for _ in range(n_params):
        om = 2 * math.pi * (1.0 - rng.random())
        z = 1.0 - rng.random()
        omega = np.array([[om]])
        zv = np.array([z])
        theta_tilde(z, om, eps)
        rt_eval_full(zv, omega, eps)
        t_full = _best_time(lambda: rt_eval_full(zv, omega, eps), repeats)
        t_rec = _best_time(lambda: theta_tilde(z, om, eps), repeats)
        rows.append({"omega": om, "z": z, "t_full": t_full, "t_recursive": t_rec, "speedup": t_full / t_rec})
    return rows


def _best_time(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best
