"""Fasano-Franceschini two-sample test in two and three dimensions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import PushedDensity, RtbmParams, sample
from .samples import Sample

__all__ = ["FfResult", "orthant_fractions", "ff_two_sample", "ff_model_vs_data"]


@dataclass(frozen=True)
class FfResult:
    d_stat: float
    scaled: float
    n1: int
    n2: int


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Sample) else np.atleast_2d(np.asarray(x, dtype=float))


def orthant_fractions(points: np.ndarray, origins: np.ndarray) -> np.ndarray:
    """Fraction of ``points`` in each open orthant around each origin.

    Orthant ``c`` holds the points with ``x_j > o_j`` exactly for the bits
    ``j`` set in ``c``; a point tied with the origin in any coordinate is in
    no orthant.

    Returns
    -------
    ndarray, shape (len(origins), 2**d)
    """
    n, d = points.shape
    above = points[None, :, :] > origins[:, None, :]
    below = points[None, :, :] < origins[:, None, :]
    valid = np.all(above | below, axis=2)
    code = above.astype(np.int64) @ (1 << np.arange(d))
    flat = np.arange(len(origins))[:, None] * (1 << d) + code
    counts = np.bincount(flat[valid], minlength=len(origins) << d)
    return counts.reshape(len(origins), 1 << d) / n


def ff_two_sample(a, b) -> FfResult:
    """Maximum orthant-fraction discrepancy over all pooled points as origins.

    ``scaled`` multiplies the statistic by ``sqrt(n1 n2 / (n1 + n2))``.
    """
    a, b = _as_array(a), _as_array(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    d = a.shape[1]
    if d not in (2, 3):
        raise ValueError(f"the test is defined here for d in (2, 3), got d={d}")
    n1, n2 = len(a), len(b)
    if min(n1, n2) < 10:
        raise ValueError("each sample needs at least 10 points")
    origins = np.concatenate([a, b])
    diff = np.abs(orthant_fractions(a, origins) - orthant_fractions(b, origins))
    d_stat = float(diff.max())
    return FfResult(d_stat, d_stat * math.sqrt(n1 * n2 / (n1 + n2)), n1, n2)


def ff_model_vs_data(density, s, repeats: int = 10, seed: int = 0) -> tuple[float, float]:
    """Mean and standard deviation of the scaled statistic over ``repeats`` model draws.

    Each draw has as many points as the data. ``density`` is a machine or a
    :class:`~thetabm.model.PushedDensity` already mapped into data coordinates.
    The standard deviation uses ``ddof=1`` and is 0 for a single repeat.
    """
    data = _as_array(s)
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    rngs = np.random.default_rng(seed).spawn(repeats)
    vals = []
    for rng in rngs:
        if isinstance(density, PushedDensity):
            draw = density.sample(len(data), rng)
        elif isinstance(density, RtbmParams):
            draw = sample(density, len(data), rng)
        else:
            raise TypeError(f"cannot sample from {type(density).__name__}")
        vals.append(ff_two_sample(draw, data).scaled)
    vals = np.array(vals)
    return float(vals.mean()), float(vals.std(ddof=1)) if repeats > 1 else 0.0
