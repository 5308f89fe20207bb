"""Seeded synthetic rate series for benchmarks, tests and the bundled sample."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cir import CirParams, milstein_step
from .market_data import DEFAULT_DELTA, RateSeries


@dataclass(frozen=True)
class Regime:
    length: int
    params: CirParams


# Four regimes with distinct long-run levels, speeds and volatilities; each
# starts away from its own mean so the series trends inside every regime.
DEFAULT_REGIMES = (
    Regime(17, CirParams(4.0, 3.2, 0.35)),
    Regime(17, CirParams(6.0, 1.2, 0.25)),
    Regime(17, CirParams(3.0, 2.4, 0.45)),
    Regime(17, CirParams(5.0, 0.6, 0.20)),
)
BUNDLED_SEED = 9


def milstein_path(r0: float, params: CirParams, shocks, delta: float = DEFAULT_DELTA
                  ) -> np.ndarray:
    """Path of len(shocks) + 1 points started at r0."""
    out = [float(r0)]
    for z in shocks:
        out.append(milstein_step(out[-1], params, delta, z))
    return np.array(out)


def exact_cir_path(r0: float, params: CirParams, n: int, delta: float,
                   rng: np.random.Generator) -> np.ndarray:
    """n points of a CIR path sampled from the exact noncentral chi-square law."""
    k, theta, s = params.k, params.theta, params.sigma
    if s == 0:
        raise ValueError("exact sampling needs sigma > 0")
    c = s * s * (1.0 - math.exp(-k * delta)) / (4.0 * k)
    df = 4.0 * k * theta / (s * s)
    decay = math.exp(-k * delta)
    out = np.empty(n)
    out[0] = r0
    for h in range(1, n):
        out[h] = c * rng.noncentral_chisquare(df, out[h - 1] * decay / c)
    return out


def regime_series(regimes: Sequence[Regime] = DEFAULT_REGIMES, seed: int = 0,
                  r0: float | None = None, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Concatenated Milstein paths; each regime continues from the last value."""
    rng = np.random.default_rng(seed)
    r = regimes[0].params.theta * 0.5 if r0 is None else r0
    out = []
    for reg in regimes:
        for _ in range(reg.length):
            r = milstein_step(r, reg.params, delta, rng.standard_normal())
            out.append(r)
    return np.array(out)


def monthly_dates(n: int, start: dt.date = dt.date(2015, 1, 31)) -> list[dt.date]:
    """Month-end dates starting at `start`."""
    dates = []
    y, m = start.year, start.month
    for _ in range(n):
        nxt = dt.date(y + (m == 12), m % 12 + 1, 1)
        dates.append(nxt - dt.timedelta(days=1))
        y, m = nxt.year, nxt.month
    return dates


def bundled_series(seed: int = BUNDLED_SEED) -> RateSeries:
    values = regime_series(DEFAULT_REGIMES, seed)
    return RateSeries(values, monthly_dates(len(values)), "ON")


def write_rate_csv(path, columns: dict, dates: Sequence[dt.date]) -> None:
    """Write a date column plus one column per maturity, floats in repr form."""
    names = list(columns)
    lines = ["date," + ",".join(names)]
    for i, d in enumerate(dates):
        lines.append(d.isoformat() + "," + ",".join(repr(float(columns[c][i]))
                                                     for c in names))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def bundled_paths() -> tuple:
    """(csv, config) paths of the bundled 68-point sample."""
    from importlib.resources import files
    base = files("cirsharp") / "data"
    return base / "synthetic_68.csv", base / "synthetic_68.json"


def second_maturity(seed: int = BUNDLED_SEED) -> np.ndarray:
    """A companion column: the same regimes, independent shocks, lifted by 0.15."""
    return regime_series(DEFAULT_REGIMES, seed + 1000) + 0.15
