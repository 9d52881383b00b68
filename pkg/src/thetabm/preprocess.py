"""z-score + PCA preprocessing, recorded as an invertible affine map."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .samples import Sample

__all__ = ["AffineMap", "DegenerateDataError", "fit_zscore_pca", "apply", "invert"]


class DegenerateDataError(ValueError):
    """The sample covariance is singular."""


@dataclass(frozen=True)
class AffineMap:
    """``y = linear @ x + offset``."""

    linear: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        linear = np.atleast_2d(np.asarray(self.linear, dtype=float))
        offset = np.atleast_1d(np.asarray(self.offset, dtype=float))
        if linear.shape[0] != linear.shape[1] or offset.shape != (linear.shape[0],):
            raise ValueError(f"incompatible shapes {linear.shape} and {offset.shape}")
        sign, logdet = np.linalg.slogdet(linear)
        if sign == 0 or not np.isfinite(logdet):
            raise ValueError("affine map is singular")
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "_log_abs_det", float(logdet))

    @property
    def dim(self) -> int:
        return self.linear.shape[0]

    @property
    def log_abs_det(self) -> float:
        return self._log_abs_det

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(np.eye(dim), np.zeros(dim))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.linear.T + self.offset

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.linear)
        return AffineMap(inv, -inv @ self.offset)

    def then(self, other: "AffineMap") -> "AffineMap":
        """The map ``x -> other(self(x))``."""
        return AffineMap(other.linear @ self.linear, other.linear @ self.offset + other.offset)

    def to_dict(self) -> dict:
        return {"linear": self.linear.tolist(), "offset": self.offset.tolist(),
                "log_abs_det": self.log_abs_det}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineMap":
        return cls(np.array(d["linear"], dtype=float), np.array(d["offset"], dtype=float))


def apply(amap: AffineMap, s: Sample) -> Sample:
    return Sample(amap(s.data), s.source)


def invert(amap: AffineMap) -> AffineMap:
    return amap.inverse()


def fit_zscore_pca(s: Sample) -> AffineMap:
    """Standardize each column, then rotate onto the principal axes.

    The rotation rows are eigenvectors of the sample correlation matrix in
    descending eigenvalue order, each signed so that its largest-magnitude
    entry is positive. The transformed sample has zero mean and diagonal
    covariance (the eigenvalues); it is not rescaled further.
    """
    x = s.data
    n, d = x.shape
    if n <= d:
        raise DegenerateDataError(f"need more rows than columns, got {n} x {d}")
    mu = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    flat = np.flatnonzero(~(sd > 1e-12 * np.maximum(1.0, np.abs(mu))))
    if flat.size:
        raise DegenerateDataError(f"dimension {int(flat[0])} has zero variance")
    corr = np.corrcoef(x, rowvar=False).reshape(d, d)
    evals, evecs = np.linalg.eigh(corr)
    if evals[0] < 1e-12 * evals[-1]:
        culprit = int(np.argmax(np.abs(evecs[:, 0])))
        raise DegenerateDataError(f"covariance is singular; dimension {culprit} is collinear with the others")
    order = np.argsort(evals)[::-1]
    R = evecs[:, order].T
    pivot = np.argmax(np.abs(R), axis=1)
    R *= np.sign(R[np.arange(d), pivot])[:, None]
    linear = R / sd[None, :]
    return AffineMap(linear, -linear @ mu)
