"""Yield panels on a fixed time grid and the time-to-maturity interpolation.

A panel row holds continuously-compounded spot yields ``Y(t, t+m)`` for the
maturities of a :class:`MaturityGrid`.  One time step later the same bonds
have time to maturity ``m - delta``; equivalently, forecasting row ``t`` needs
yields at ``t - delta`` for times to maturity ``m + delta``, which are read
off the previous row by linear interpolation in time to maturity.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
import re
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .errors import GridError

KNOT_TOL = 1e-12
_LABEL_RE = re.compile(
    r"^\s*(\d+(?:\.\d+)?)\s*(w|wk|week|weeks|m|mo|month|months|y|yr|year|years)\s*$",
    re.IGNORECASE,
)


def parse_maturity_label(label: str) -> float:
    """Convert labels such as ``1W``, ``2 weeks``, ``3M`` or ``10Y`` to years.

    Weeks are 1/52 year and months 1/12 year.  A bare number is taken to be
    in years already.
    """
    match = _LABEL_RE.match(label)
    if match is None:
        try:
            return float(label)
        except ValueError:
            raise GridError(f"unrecognised maturity label {label!r}") from None
    count = float(match.group(1))
    unit = match.group(2)[0].lower()
    if unit == "w":
        return count / 52
    if unit == "m":
        return count / 12
    return count


def format_maturity_label(m: float) -> str:
    for unit, size in (("Y", 1.0), ("M", 1 / 12), ("W", 1 / 52)):
        n = m / size
        if abs(n - round(n)) < 1e-9 and round(n) >= 1:
            return f"{int(round(n))}{unit}"
    return repr(m)


@dataclass(frozen=True)
class MaturityGrid:
    """Grid size ``delta`` and the ordered set of modelled times to maturity.

    ``extrapolate_flat`` enables constant extrapolation when a shifted time
    to maturity exceeds the longest maturity (off by default).
    """

    delta: float
    maturities: tuple[float, ...]
    labels: tuple[str, ...] = ()
    extrapolate_flat: bool = False

    def __post_init__(self):
        mats = tuple(float(m) for m in self.maturities)
        object.__setattr__(self, "maturities", mats)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(format_maturity_label(m) for m in mats))
        else:
            object.__setattr__(self, "labels", tuple(self.labels))
        if not (self.delta > 0):
            raise GridError("delta must be positive")
        n = 1.0 / self.delta
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise GridError(f"1/delta must be a positive integer, got {n!r}")
        if len(mats) == 0:
            raise GridError("grid needs at least one maturity")
        if any(m <= 0 for m in mats):
            raise GridError("maturities must be positive")
        if any(b <= a for a, b in zip(mats, mats[1:])):
            raise GridError("maturities must be strictly increasing")
        if len(self.labels) != len(mats):
            raise GridError("one label per maturity required")
        if len(set(self.labels)) != len(self.labels):
            raise GridError("maturity labels must be unique")

    @classmethod
    def from_labels(cls, delta: float, labels: Sequence[str], extrapolate_flat: bool = False):
        labels = [lab.strip() for lab in labels]
        return cls(delta, tuple(parse_maturity_label(l) for l in labels), tuple(labels), extrapolate_flat)

    @property
    def d(self) -> int:
        return len(self.maturities)

    @property
    def m(self) -> np.ndarray:
        return np.asarray(self.maturities)

    @property
    def has_short_end(self) -> bool:
        return abs(self.maturities[0] - self.delta) <= KNOT_TOL

    def require_short_end(self) -> None:
        """Raise unless the shortest maturity equals ``delta``."""
        if not self.has_short_end:
            raise GridError(
                f"smallest maturity {self.maturities[0]!r} must equal delta {self.delta!r} "
                "to observe the one-period yield"
            )

    def index_of(self, key: float | str) -> int:
        if isinstance(key, str):
            if key in self.labels:
                return self.labels.index(key)
            key = parse_maturity_label(key)
        for i, m in enumerate(self.maturities):
            if abs(m - key) <= 1e-9:
                return i
        raise GridError(f"maturity {key!r} not on grid")

    def subset(self, keys: Sequence[float | str], delta: float | None = None) -> "MaturityGrid":
        idx = sorted({self.index_of(k) for k in keys})
        return MaturityGrid(
            self.delta if delta is None else delta,
            tuple(self.maturities[i] for i in idx),
            tuple(self.labels[i] for i in idx),
            self.extrapolate_flat,
        )


@dataclass(frozen=True)
class YieldPanel:
    """Rows of yields at grid times ``0, delta, ..., K*delta``.

    ``yields`` has shape ``(K+1, d)``; ``times`` holds one ISO date per row.
    """

    grid: MaturityGrid
    yields: np.ndarray
    times: tuple[str, ...] = field(default=())

    def __post_init__(self):
        y = np.array(self.yields, dtype=float)
        if y.ndim != 2 or y.shape[1] != self.grid.d:
            raise GridError(f"yields must have shape (rows, {self.grid.d}), got {y.shape}")
        if y.shape[0] < 2:
            raise GridError("panel needs at least two rows")
        if not np.all(np.isfinite(y)):
            raise GridError("panel contains non-finite yields")
        y.setflags(write=False)
        object.__setattr__(self, "yields", y)
        if not self.times:
            object.__setattr__(self, "times", synthetic_dates(y.shape[0], self.grid.delta))
        elif len(self.times) != y.shape[0]:
            raise GridError("one time stamp per row required")
        else:
            object.__setattr__(self, "times", tuple(self.times))

    @property
    def K(self) -> int:
        """Number of increments (rows minus one)."""
        return self.yields.shape[0] - 1

    def head(self, rows: int) -> "YieldPanel":
        """Panel restricted to its first ``rows`` rows."""
        return YieldPanel(self.grid, self.yields[:rows], self.times[:rows])

    def every(self, factor: int, grid: MaturityGrid | None = None) -> "YieldPanel":
        """Every ``factor``-th row, optionally on a reduced maturity grid."""
        rows = self.yields[::factor]
        times = self.times[::factor]
        if grid is None:
            return YieldPanel(self.grid, rows, times)
        cols = [self.grid.index_of(m) for m in grid.maturities]
        return YieldPanel(grid, rows[:, cols], times)


def synthetic_dates(rows: int, delta: float, start: str = "2000-01-03") -> tuple[str, ...]:
    """Calendar stamps spaced ``365.25 * delta`` days apart (weekly grids get exact weeks)."""
    origin = dt.date.fromisoformat(start)
    step = 7.0 if abs(delta - 1 / 52) < 1e-12 else 365.25 * delta
    return tuple((origin + dt.timedelta(days=int(round(k * step)))).isoformat() for k in range(rows))


def _check_dates(dates: list[dt.date], delta: float) -> None:
    nominal = 7.0 if abs(delta - 1 / 52) < 1e-12 else 365.25 * delta
    for k in range(1, len(dates)):
        gap = (dates[k] - dates[k - 1]).days
        if gap <= 0:
            raise GridError(f"non-monotone dates at row {k}: {dates[k - 1]} -> {dates[k]}")
        if gap > 1.5 * nominal:
            raise GridError(f"date gap at row {k}: {dates[k - 1]} -> {dates[k]}")


def parse_yield_csv(source: IO[bytes] | IO[str] | bytes | str, grid: MaturityGrid) -> YieldPanel:
    """Read a ``date,<label>,...`` CSV of decimal yields into a validated panel.

    Columns are matched to grid labels (or to equal maturities under another
    spelling); extra columns are ignored.  Rows are mapped to consecutive
    grid times in file order after the date checks.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    reader = csv.reader(io.StringIO(text.lstrip("﻿")))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise GridError("empty CSV") from None
    if not header or header[0].lower() != "date":
        raise GridError("first CSV column must be 'date'")

    columns = []
    for label, m in zip(grid.labels, grid.maturities):
        if label in header[1:]:
            columns.append(header.index(label))
            continue
        for j, h in enumerate(header[1:], start=1):
            try:
                if abs(parse_maturity_label(h) - m) <= 1e-9:
                    columns.append(j)
                    break
            except GridError:
                continue
        else:
            raise GridError(f"missing maturity column {label!r}")

    dates: list[dt.date] = []
    rows: list[list[float]] = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise GridError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
        try:
            dates.append(dt.date.fromisoformat(rec[0].strip()))
        except ValueError:
            raise GridError(f"line {lineno}: bad ISO date {rec[0]!r}") from None
        values = []
        for j in columns:
            cell = rec[j].strip()
            try:
                v = float(cell)
            except ValueError:
                raise GridError(f"line {lineno}: non-numeric cell {cell!r} in column {header[j]!r}") from None
            if not math.isfinite(v):
                raise GridError(f"line {lineno}: non-finite cell {cell!r}")
            values.append(v)
        rows.append(values)
    if len(rows) < 2:
        raise GridError("panel needs at least two data rows")
    _check_dates(dates, grid.delta)
    return YieldPanel(grid, np.array(rows), tuple(d.isoformat() for d in dates))


def write_yield_csv(panel: YieldPanel, sink: IO[str]) -> None:
    """Write ``panel`` in the CSV schema read by :func:`parse_yield_csv`.

    Values use ``repr`` so a re-parse reproduces the floats bit for bit.
    """
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["date", *panel.grid.labels])
    for date, row in zip(panel.times, panel.yields):
        writer.writerow([date, *(repr(float(v)) for v in row)])


def yield_csv_text(panel: YieldPanel) -> str:
    buf = io.StringIO()
    write_yield_csv(panel, buf)
    return buf.getvalue()


def _bracket(target: float, grid: MaturityGrid) -> tuple[int, int, float]:
    """Indices ``(lo, hi)`` and weight on ``hi`` for linear interpolation at ``target``."""
    mats = grid.maturities
    for i, m in enumerate(mats):
        if abs(target - m) <= KNOT_TOL:
            return i, i, 0.0
    if target > mats[-1]:
        if not grid.extrapolate_flat:
            raise GridError(
                f"time to maturity {target!r} beyond longest maturity {mats[-1]!r} "
                "and flat extrapolation is disabled"
            )
        last = len(mats) - 1
        return last, last, 0.0
    if target < mats[0]:
        raise GridError(f"time to maturity {target!r} below shortest maturity {mats[0]!r}")
    hi = int(np.searchsorted(mats, target))
    lo = hi - 1
    return lo, hi, (target - mats[lo]) / (mats[hi] - mats[lo])


def interpolate_shifted_yield(panel_row: Sequence[float], target_ttm: float, grid: MaturityGrid) -> float:
    """Yield at ``target_ttm`` from one panel row, linear in time to maturity.

    For ``target_ttm = m + delta`` inside ``(m, m_next]`` this is
    ``((m_next - m - delta) * Y_m + delta * Y_next) / (m_next - m)``.  Knots
    are returned unchanged.
    """
    lo, hi, w = _bracket(float(target_ttm), grid)
    row = np.asarray(panel_row, dtype=float)
    if lo == hi:
        return float(row[lo])
    return float((1.0 - w) * row[lo] + w * row[hi])


def shift_matrix(grid: MaturityGrid) -> np.ndarray:
    """Matrix ``W`` with ``W @ row`` = yields at times to maturity ``m + delta``."""
    W = np.zeros((grid.d, grid.d))
    for j, m in enumerate(grid.maturities):
        lo, hi, w = _bracket(m + grid.delta, grid)
        if lo == hi:
            W[j, lo] = 1.0
        else:
            W[j, lo] = 1.0 - w
            W[j, hi] = w
    return W


def extrapolated_maturities(grid: MaturityGrid) -> list[str]:
    """Labels whose shifted time to maturity falls beyond the longest maturity."""
    top = grid.maturities[-1]
    return [lab for lab, m in zip(grid.labels, grid.maturities) if m + grid.delta > top + KNOT_TOL]


@dataclass(frozen=True)
class ShiftedCurveView:
    """Yields ``Y(t - delta, t + m)`` for ``m`` in the grid, read from row ``base_index``."""

    base_index: int
    base_time: str
    ttm: np.ndarray
    values: np.ndarray


def shifted_curve(panel: YieldPanel, time_index: int) -> ShiftedCurveView:
    if not -panel.yields.shape[0] <= time_index < panel.yields.shape[0]:
        raise GridError(f"row {time_index} outside panel of {panel.yields.shape[0]} rows")
    idx = time_index % panel.yields.shape[0]
    row = panel.yields[idx]
    g = panel.grid
    values = np.array([interpolate_shifted_yield(row, m + g.delta, g) for m in g.maturities])
    return ShiftedCurveView(idx, panel.times[idx], g.m + g.delta, values)


def shifted_curves(panel: YieldPanel) -> np.ndarray:
    """All shifted curves at once: row ``r`` is read from panel row ``r``."""
    return panel.yields @ shift_matrix(panel.grid).T
