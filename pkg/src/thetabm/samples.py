"""Observation matrices with provenance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Sample"]


@dataclass(frozen=True)
class Sample:
    """``N`` observations of an ``N_v``-dimensional variable.

    ``source`` is a free-form provenance string (file name, generator, dropped
    row counts, transformations applied).
    """

    data: np.ndarray
    source: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValueError(f"sample data must be 2-D, got shape {data.shape}")
        if len(data) < 2:
            raise ValueError(f"a sample needs at least 2 rows, got {len(data)}")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def column(self, i: int) -> "Sample":
        return Sample(self.data[:, i:i + 1], f"{self.source}[:, {i}]")
