"""CSV ingestion, the uranium data loader and equity log returns."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .samples import Sample

__all__ = [
    "URANIUM_ENV",
    "PriceSeries",
    "load_csv",
    "write_csv",
    "find_uranium",
    "load_uranium",
    "load_prices",
    "log_returns",
    "return_matrix",
]

#: Environment variable pointing at a CSV export of the ``copula`` package's uranium data.
URANIUM_ENV = "THETABM_URANIUM_CSV"


def _parse(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return math.nan


def load_csv(path, columns=None) -> Sample:
    """Read numeric columns from a headed, comma-separated file.

    ``columns`` selects by header name or 0-based index; ``None`` keeps all
    columns. Rows with a missing, non-numeric or non-finite value in a
    selected column are dropped and counted in the provenance string.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        rows = [r for r in reader if r]
    if columns is None:
        idx = list(range(len(header)))
    else:
        idx = []
        for c in columns:
            if isinstance(c, (int, np.integer)) or (isinstance(c, str) and c.isdigit() and c not in header):
                i = int(c)
                if not 0 <= i < len(header):
                    raise KeyError(f"column index {i} out of range for {path} ({len(header)} columns)")
                idx.append(i)
            elif c in header:
                idx.append(header.index(c))
            else:
                raise KeyError(f"column {c!r} not in {path} (have {header})")
    data = np.array([[_parse(r[i]) if i < len(r) else math.nan for i in idx] for r in rows], dtype=float)
    data = data.reshape(len(rows), len(idx))
    keep = np.all(np.isfinite(data), axis=1)
    dropped = int((~keep).sum())
    data = data[keep]
    if len(data) == 0:
        raise ValueError(f"{path} has no usable rows")
    names = ",".join(header[i] for i in idx)
    return Sample(data, f"{path.name}[{names}] dropped={dropped}")


def write_csv(s: Sample, path, columns=None) -> None:
    """Write with a header; floats use ``repr`` so a reload is bit-identical."""
    columns = columns or [f"x{i}" for i in range(s.dim)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in s.data:
            w.writerow([repr(float(x)) for x in row])


def find_uranium(path=None) -> Path | None:
    candidates = [path, os.environ.get(URANIUM_ENV), Path(__file__).parent / "data" / "uranium.csv"]
    for c in candidates:
        if c and Path(c).is_file():
            return Path(c)
    return None


def load_uranium(path=None, columns=(0, 1)) -> Sample:
    """Load the uranium exploration data (log concentrations, one column per element).

    The file is not bundled; pass ``path`` or set ``THETABM_URANIUM_CSV``
    (e.g. an export of ``copula::uranium`` from R via ``write.csv(uranium,
    row.names=FALSE)``). Defaults to the first two columns.
    """
    found = find_uranium(path)
    if found is None:
        raise FileNotFoundError(
            f"uranium CSV not found; pass a path or set {URANIUM_ENV} "
            "(export from R: write.csv(copula::uranium, 'uranium.csv', row.names=FALSE))"
        )
    return load_csv(found, list(columns) if columns is not None else None)


@dataclass(frozen=True)
class PriceSeries:
    """Daily closing prices keyed by ISO-8601 date."""

    dates: tuple[str, ...]
    close: np.ndarray
    name: str = ""

    def __post_init__(self):
        close = np.asarray(self.close, dtype=float)
        dates = tuple(self.dates)
        if len(dates) != len(close):
            raise ValueError("dates and close differ in length")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if not np.all(close > 0) or not np.all(np.isfinite(close)):
            raise ValueError("prices must be finite and positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "close", close)


def load_prices(path, date_column="date", close_column="close") -> PriceSeries:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or date_column not in rows[0] or close_column not in rows[0]:
        raise KeyError(f"{path} needs columns {date_column!r} and {close_column!r}")
    rows.sort(key=lambda r: r[date_column])
    return PriceSeries(tuple(r[date_column] for r in rows),
                       np.array([float(r[close_column]) for r in rows]), path.stem)


def return_matrix(series) -> tuple[np.ndarray, list[str]]:
    """Daily log returns on the dates shared by every series, as a raw array.

    Returns are taken between consecutive shared dates, so the array has one
    row fewer than the date intersection. Also returns the shared dates.
    """
    series = list(series)
    if not series:
        raise ValueError("need at least one price series")
    common = set(series[0].dates)
    for ps in series[1:]:
        common &= set(ps.dates)
    dates = sorted(common)
    if len(dates) < 2:
        raise ValueError(f"date intersection has {len(dates)} entries; need at least 2")
    cols = []
    for ps in series:
        pos = {d: i for i, d in enumerate(ps.dates)}
        cols.append(np.diff(np.log(ps.close[[pos[d] for d in dates]])))
    return np.column_stack(cols), dates


def log_returns(series) -> Sample:
    """:func:`return_matrix` wrapped as a :class:`Sample` (needs at least two returns)."""
    series = list(series)
    R, dates = return_matrix(series)
    names = ",".join(ps.name or f"s{i}" for i, ps in enumerate(series))
    return Sample(R, f"log_returns[{names}] {dates[0]}..{dates[-1]}")
