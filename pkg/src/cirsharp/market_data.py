"""Rate series ingestion and the additive translation away from zero."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, MalformedRowError, ShiftError
from .stats import harmonic_mean

DEFAULT_DELTA = 1.0 / 30.0
DEFAULT_SHIFT_THRESHOLD = 1e-2
# Offsets are rounded up to a multiple of this so that shifting data that
# lives on the same dyadic grid round-trips bit-exactly.
ALPHA_GRID = 2.0 ** -20


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RateSeries:
    """Observed short rates (percent p.a.) for a single maturity."""

    values: np.ndarray
    timestamps: tuple = field(default=())
    maturity_label: str = ""
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        values = _frozen(self.values)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or len(values) < 2:
            raise DataError("a rate series needs at least 2 observations")
        if not np.all(np.isfinite(values)):
            raise DataError("rate series contains non-finite values")
        stamps = tuple(self.timestamps)
        if not stamps:
            stamps = tuple(range(len(values)))
        if len(stamps) != len(values):
            raise DataError(
                f"{len(values)} values but {len(stamps)} timestamps")
        for a, b in zip(stamps, stamps[1:]):
            if not a < b:
                raise DataError(f"timestamps not strictly increasing at {b}")
        object.__setattr__(self, "timestamps", stamps)
        if not self.delta > 0:
            raise DataError("delta must be positive")

    def __len__(self):
        return len(self.values)

    def with_values(self, values) -> "RateSeries":
        return RateSeries(values, self.timestamps, self.maturity_label,
                          self.delta)

    def window(self, start: int, stop: int) -> "RateSeries":
        """0-based half-open slice, keeping label and delta."""
        return RateSeries(self.values[start:stop], self.timestamps[start:stop],
                          self.maturity_label, self.delta)


@dataclass(frozen=True)
class ShiftRecord:
    alpha: float = 0.0
    direction: str = "none"  # "add" | "subtract" | "none"

    def __post_init__(self):
        if self.direction not in ("add", "subtract", "none"):
            raise ValueError(f"unknown shift direction {self.direction!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.direction == "none" and self.alpha != 0:
            raise ValueError("direction 'none' requires alpha == 0")

    def forward(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.direction == "add":
            return values + self.alpha
        if self.direction == "subtract":
            return values - self.alpha
        return values.copy()


IDENTITY_SHIFT = ShiftRecord()


def read_rate_table(path) -> tuple[list[str], list[dt.date], dict[str, list[str]]]:
    """Parse a delimited rate file into (columns, dates, raw cells per column).

    The first column holds ISO-8601 dates; the delimiter is sniffed from the
    header line (comma, semicolon or tab).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"rate file not found: {path}")
    text = path.read_text(encoding="utf-8-sig")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path} is empty")
    delimiter = max(",;\t", key=lines[0].count)
    rows = list(csv.reader(lines, delimiter=delimiter))
    header = [h.strip() for h in rows[0]]
    columns = header[1:]
    dates = []
    cells = {c: [] for c in columns}
    for idx, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise MalformedRowError(
                idx, f"expected {len(header)} cells, got {len(row)}")
        try:
            dates.append(dt.date.fromisoformat(row[0].strip()))
        except ValueError:
            raise MalformedRowError(idx, f"bad date {row[0]!r}") from None
        for c, cell in zip(columns, row[1:]):
            cells[c].append(cell.strip())
    return columns, dates, cells


def load_rate_series(path, maturity_label: str,
                     delta: float = DEFAULT_DELTA) -> RateSeries:
    """Load one maturity column of a rate file, sorted by date."""
    columns, dates, cells = read_rate_table(path)
    if maturity_label not in cells:
        raise DataError(
            f"maturity {maturity_label!r} not found in {path} "
            f"(columns: {', '.join(columns)})")
    values = []
    for idx, cell in enumerate(cells[maturity_label], start=1):
        try:
            v = float(cell)
        except ValueError:
            raise MalformedRowError(
                idx, f"non-numeric value {cell!r} for {maturity_label}") from None
        if not math.isfinite(v):
            raise MalformedRowError(idx, f"non-finite value {cell!r}")
        values.append(v)
    if len(values) < 2:
        raise DataError(f"{path}: need at least 2 rows, found {len(values)}")
    order = sorted(range(len(dates)), key=dates.__getitem__)
    sorted_dates = [dates[i] for i in order]
    for i in range(1, len(sorted_dates)):
        if sorted_dates[i] == sorted_dates[i - 1]:
            raise DataError(f"duplicate date {sorted_dates[i].isoformat()}")
    return RateSeries([values[i] for i in order], sorted_dates,
                      maturity_label, delta)


def needs_shift(series, seg, threshold: float = DEFAULT_SHIFT_THRESHOLD) -> bool:
    """True when any group's harmonic mean falls below `threshold`.

    Groups containing a non-positive rate always trigger, since the harmonic
    mean is undefined for them.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    values = np.asarray(getattr(series, "values", series), dtype=float)
    for start, end in seg.boundaries:
        hm = harmonic_mean(values[start - 1:end])
        if math.isnan(hm) or hm < threshold:
            return True
    return False


def empirical_percentile(values, q: float) -> float:
    """Percentile with linear interpolation at 1-based rank (n-1)q/100 + 1."""
    return float(np.percentile(np.asarray(values, dtype=float), q))


def _snap(alpha: float) -> float:
    return math.ceil(alpha / ALPHA_GRID) * ALPHA_GRID


def apply_shift(series: RateSeries, triggered: bool = True
                ) -> tuple[RateSeries, ShiftRecord]:
    """Translate a series so every value is strictly positive.

    The offset is the empirical 99th percentile of the sample (linear
    interpolation between order statistics), rounded up to `ALPHA_GRID`.
    If that leaves non-positive values the 1st percentile is subtracted
    instead. With ``triggered=False`` the series is returned untouched.
    """
    if not triggered:
        return series, IDENTITY_SHIFT
    values = series.values
    p99 = empirical_percentile(values, 99)
    if p99 > 0:
        record = ShiftRecord(_snap(p99), "add")
        shifted = record.forward(values)
        if np.all(shifted > 0):
            return series.with_values(shifted), record
    p1 = empirical_percentile(values, 1)
    if p1 != 0:
        record = ShiftRecord(_snap(abs(p1)), "subtract" if p1 > 0 else "add")
        shifted = record.forward(values)
        if np.all(shifted > 0):
            return series.with_values(shifted), record
    raise ShiftError(
        "neither the 99th-percentile nor the 1st-percentile translation makes "
        f"the series positive (min={values.min():.6g}, p99={p99:.6g}, "
        f"p1={p1:.6g})")


def unshift(values: Sequence[float], record: ShiftRecord) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if record.direction == "add":
        return values - record.alpha
    if record.direction == "subtract":
        return values + record.alpha
    return values.copy()
