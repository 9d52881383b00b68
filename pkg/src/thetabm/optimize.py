"""CMA-ES minimization and the fitting protocol (marginal pre-training, joint fit)."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .costs import TRAIN_EPS, fisher_cost, nll_cost
from .model import RtbmParams, count_params, is_feasible, pack, params_to_dict, unpack
from .samples import Sample

__all__ = [
    "CmaConfig",
    "CmaResult",
    "FitReport",
    "InitializationError",
    "cmaes_minimize",
    "pretrain_marginals",
    "fit",
    "random_init",
    "COSTS",
]

log = logging.getLogger(__name__)

COSTS = {"fisher": fisher_cost, "nll": nll_cost}


class InitializationError(RuntimeError):
    """No feasible candidate could be drawn around the starting point."""


@dataclass(frozen=True)
class CmaConfig:
    """CMA-ES settings; ``popsize=None`` means ``4 + floor(3 ln dim)``."""

    popsize: int | None = None
    sigma0: float = 0.3
    max_iterations: int = 500
    seed: int = 0
    resample_limit: int = 100
    tol_x: float = 1e-12

    def __post_init__(self):
        if self.popsize is not None and self.popsize < 4:
            raise ValueError("popsize must be at least 4")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.resample_limit < 0:
            raise ValueError("resample_limit must be non-negative")

    def lam(self, dim: int) -> int:
        return self.popsize if self.popsize is not None else 4 + int(3 * math.log(dim))


@dataclass
class CmaResult:
    best_x: np.ndarray
    best_cost: float
    cost_trace: list[float]
    evaluations: int
    iterations: int
    wall_seconds: float


def cmaes_minimize(objective: Callable[[np.ndarray], float], init, cfg: CmaConfig = CmaConfig()) -> CmaResult:
    """(mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates.

    Candidates scoring ``+inf`` are redrawn up to ``cfg.resample_limit`` times
    and then kept with their infinite cost, which ranks them last.
    ``cost_trace[g]`` is the best cost seen up to generation ``g``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    m = np.array(init, dtype=float)
    N = m.size
    lam = cfg.lam(N)
    mu = lam // 2
    weights = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights /= weights.sum()
    mueff = 1.0 / np.sum(weights**2)

    cc = (4 + mueff / N) / (N + 4 + 2 * mueff / N)
    cs = (mueff + 2) / (N + mueff + 5)
    c1 = 2 / ((N + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((N + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (N + 1)) - 1) + cs
    chiN = math.sqrt(N) * (1 - 1 / (4 * N) + 1 / (21 * N * N))

    sigma = cfg.sigma0
    pc = np.zeros(N)
    ps = np.zeros(N)
    B = np.eye(N)
    Dg = np.ones(N)
    C = np.eye(N)

    evals = 0
    best_x = m.copy()
    best_f = float(objective(m))
    evals += 1
    trace: list[float] = []

    for gen in range(cfg.max_iterations):
        xs = np.empty((lam, N))
        fs = np.empty(lam)
        for k in range(lam):
            for attempt in range(cfg.resample_limit + 1):
                x = m + sigma * (B @ (Dg * rng.standard_normal(N)))
                f = float(objective(x))
                evals += 1
                if math.isfinite(f):
                    break
            xs[k], fs[k] = x, f if math.isfinite(f) else math.inf
        if gen == 0 and not math.isfinite(best_f) and not np.any(np.isfinite(fs)):
            raise InitializationError(
                f"all {lam} initial candidates are infeasible after {cfg.resample_limit} redraws each"
            )
        order = np.argsort(fs, kind="stable")
        if fs[order[0]] < best_f:
            best_f, best_x = float(fs[order[0]]), xs[order[0]].copy()
        trace.append(best_f)

        sel = xs[order[:mu]]
        m_old = m
        m = weights @ sel
        y_w = (m - m_old) / sigma
        c_inv_sqrt = B @ np.diag(1.0 / Dg) @ B.T
        ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * (c_inv_sqrt @ y_w)
        hsig = np.linalg.norm(ps) / math.sqrt(1 - (1 - cs) ** (2 * (gen + 1))) / chiN < 1.4 + 2 / (N + 1)
        pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mueff) * y_w
        art = (sel - m_old) / sigma
        C = ((1 - c1 - cmu + (1 - hsig) * c1 * cc * (2 - cc)) * C
             + c1 * np.outer(pc, pc)
             + cmu * (art.T * weights) @ art)
        sigma *= math.exp((cs / damps) * (np.linalg.norm(ps) / chiN - 1))

        C = np.triu(C) + np.triu(C, 1).T
        evals_, B = np.linalg.eigh(C)
        Dg = np.sqrt(np.maximum(evals_, 1e-300))
        if sigma * Dg.max() < cfg.tol_x:
            break

    return CmaResult(best_x, best_f, trace, evals, len(trace), time.perf_counter() - t0)


@dataclass
class FitReport:
    """Outcome of :func:`fit`; ``wall_seconds`` covers pre-training and the joint run."""

    best_params: RtbmParams
    cost_trace: list[float]
    wall_seconds: float
    evaluations: int
    best_cost: float
    cost: str
    init_params: RtbmParams | None = None
    pretrain_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "best_cost": self.best_cost,
            "wall_seconds": self.wall_seconds,
            "pretrain_seconds": self.pretrain_seconds,
            "evaluations": self.evaluations,
            "cost_trace": self.cost_trace,
            "best_params": params_to_dict(self.best_params),
            "config": self.config,
        }


def _initial_marginal(n_h: int, diagonal_q: bool, rng) -> RtbmParams:
    Q = np.full(n_h, 2 * math.pi) if diagonal_q else 2 * math.pi * np.eye(n_h)
    return RtbmParams(np.eye(1), Q, rng.normal(0.0, 0.1, size=(1, n_h)), np.zeros(1), np.zeros(n_h), diagonal_q)


def _objective(cost_fn, data, n_v, n_h, diagonal_q, eps):
    def f(x):
        return cost_fn(unpack(x, n_v, n_h, diagonal_q), data, eps)
    return f


def _split_hidden(n_h: int, n_v: int) -> list[int]:
    return [len(b) for b in np.array_split(np.arange(n_h), n_v)]


def pretrain_marginals(s: Sample, n_h: int, diagonal_q: bool, cfg: CmaConfig = CmaConfig(),
                       cost: str = "fisher", eps: float = TRAIN_EPS) -> RtbmParams:
    """Fit 1-D machines to each data column and assemble a joint starting point.

    The ``n_h`` hidden units are split as evenly as possible across columns;
    a column left without hidden units gets the moment-matched Gaussian. The
    blocks are placed on the diagonal of ``T``, ``Q`` and ``W``, so before the
    cross-term noise the joint density is the product of the fitted
    marginals. Off-block entries of ``T``, ``W`` (and ``Q`` for the full
    machine) get N(0, 0.01^2) noise; ``W`` is then halved until feasible.
    """
    cost_fn = COSTS[cost]
    data = s.data
    n_v = data.shape[1]
    sizes = _split_hidden(n_h, n_v)
    rng = np.random.default_rng([cfg.seed, 7919])
    T = np.zeros((n_v, n_v))
    Q = np.zeros((n_h, n_h))
    W = np.zeros((n_v, n_h))
    bv = np.zeros(n_v)
    bh = np.zeros(n_h)
    start = 0
    for i, k in enumerate(sizes):
        col = data[:, i:i + 1]
        if k == 0:
            var = float(np.var(col))
            T[i, i] = 1.0 / var
            bv[i] = -float(np.mean(col)) / var
            continue
        init = _initial_marginal(k, diagonal_q, rng)
        sub_cfg = CmaConfig(cfg.popsize, cfg.sigma0, cfg.max_iterations, cfg.seed + 1000 * (i + 1),
                            cfg.resample_limit, cfg.tol_x)
        try:
            res = cmaes_minimize(_objective(cost_fn, col, 1, k, diagonal_q, eps), pack(init), sub_cfg)
        except Exception as exc:
            raise RuntimeError(f"marginal fit for dimension {i} failed: {exc}") from exc
        if not math.isfinite(res.best_cost):
            raise RuntimeError(f"marginal fit for dimension {i} found no feasible parameters")
        mp = unpack(res.best_x, 1, k, diagonal_q)
        blk = slice(start, start + k)
        T[i, i] = mp.T[0, 0]
        bv[i] = mp.bv[0]
        W[i, blk] = mp.W[0]
        Q[blk, blk] = mp.Q_matrix
        bh[blk] = mp.bh
        start += k

    off_t = np.triu(rng.normal(0.0, 0.01, size=(n_v, n_v)), 1)
    T_noisy = T + off_t + off_t.T
    block = np.zeros((n_v, n_h), dtype=bool)
    start = 0
    for i, k in enumerate(sizes):
        block[i, start:start + k] = True
        start += k
    W = W + np.where(block, 0.0, rng.normal(0.0, 0.01, size=W.shape))
    if diagonal_q:
        Qp = np.diag(Q).copy()
    else:
        qblock = np.zeros((n_h, n_h), dtype=bool)
        start = 0
        for k in sizes:
            qblock[start:start + k, start:start + k] = True
            start += k
        off_q = np.triu(np.where(qblock, 0.0, rng.normal(0.0, 0.01, size=Q.shape)), 1)
        Qp = Q + off_q + off_q.T
    p = RtbmParams(T_noisy, Qp, W, bv, bh, diagonal_q)
    if not is_feasible(p):
        p = RtbmParams(T, Qp if diagonal_q else Q, W, bv, bh, diagonal_q)
    for _ in range(200):
        if is_feasible(p):
            return p
        p = RtbmParams(p.T, p.Q, 0.5 * p.W, p.bv, p.bh, diagonal_q)
    raise RuntimeError("could not repair the assembled initialization into a feasible one")


def fit(s: Sample, n_h: int, diagonal_q: bool, cost: str = "fisher", cfg: CmaConfig = CmaConfig(),
        pretrain_iterations: int | None = 200, eps: float = TRAIN_EPS, init: RtbmParams | None = None) -> FitReport:
    """Pre-train on the marginals, then run CMA-ES on the joint parameters.

    ``s`` should already be preprocessed. ``pretrain_iterations=None`` skips
    pre-training and starts from ``init`` (or the default random block).
    """
    if cost not in COSTS:
        raise ValueError(f"unknown cost {cost!r}; choose from {sorted(COSTS)}")
    if n_h < 1:
        raise ValueError("n_h must be at least 1")
    n_v = s.dim
    t0 = time.perf_counter()
    if init is None:
        if pretrain_iterations:
            pre_cfg = CmaConfig(cfg.popsize, cfg.sigma0, pretrain_iterations, cfg.seed, cfg.resample_limit, cfg.tol_x)
            init = pretrain_marginals(s, n_h, diagonal_q, pre_cfg, cost, eps)
        else:
            init = random_init(n_v, n_h, diagonal_q, cfg.seed)
    t_pre = time.perf_counter() - t0
    res = cmaes_minimize(_objective(COSTS[cost], s.data, n_v, n_h, diagonal_q, eps), pack(init), cfg)
    best = unpack(res.best_x, n_v, n_h, diagonal_q)
    if not math.isfinite(res.best_cost):
        raise RuntimeError("optimization found no feasible parameters")
    wall = time.perf_counter() - t0
    log.info("fit %s n_h=%d cost=%s: %.4g in %.2fs (%d evals)",
             "pJTBM" if diagonal_q else "RTBM", n_h, cost, res.best_cost, wall, res.evaluations)
    return FitReport(
        best_params=best, cost_trace=res.cost_trace, wall_seconds=wall, evaluations=res.evaluations,
        best_cost=res.best_cost, cost=cost, init_params=init, pretrain_seconds=t_pre,
        config={**asdict(cfg), "n_h": n_h, "diagonal_q": diagonal_q, "cost": cost,
                "pretrain_iterations": pretrain_iterations, "eps": eps,
                "n_params": count_params(n_v, n_h, diagonal_q)},
    )


def random_init(n_v: int, n_h: int, diagonal_q: bool, seed: int) -> RtbmParams:
    """Unit ``T``, ``Q = 2 pi I``, ``W ~ N(0, 0.1^2)``, zero biases, made feasible by halving ``W``."""
    rng = np.random.default_rng([seed, 104729])
    Q = np.full(n_h, 2 * math.pi) if diagonal_q else 2 * math.pi * np.eye(n_h)
    p = RtbmParams(np.eye(n_v), Q, rng.normal(0.0, 0.1, size=(n_v, n_h)), np.zeros(n_v), np.zeros(n_h), diagonal_q)
    while not is_feasible(p):
        p = RtbmParams(p.T, p.Q, 0.5 * p.W, p.bv, p.bh, diagonal_q)
    return p
