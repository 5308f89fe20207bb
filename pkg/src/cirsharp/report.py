"""Machine-readable run outputs.

Tables are comma-separated with floats written by `repr`, so parsing them
back with `float` reproduces every value bit for bit. Each run also writes
one JSON summary.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import stats
from .pipeline import (CalibrationReport, ComparisonRow, ForecastResult,
                       ForecastScore, unshifted_fit)

CANDIDATES = "candidates.csv"
PARAMETERS = "parameters.csv"
S_CURVES = "s_curves.csv"
FITTED = "fitted.csv"
FORECAST = "forecast.csv"
COMPARISON = "comparison.csv"
SEGMENTS = "segments.csv"
SUMMARY = "summary.json"


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_table(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _date(series, i):
    stamp = series.timestamps[i]
    return stamp.isoformat() if hasattr(stamp, "isoformat") else stamp


# ---------------------------------------------------------------- calibrate


def write_calibration(report: CalibrationReport, series, outdir, meta=None) -> dict:
    """Write candidate, parameter, S-curve and fitted-series tables plus summary."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cand_rows, par_rows, curve_rows = [], [], []
    for j, g in enumerate(report.groups, start=1):
        s, e = g.range
        for row in g.candidate_table:
            cand_rows.append((j, s, e, str(row.spec), row.spec.p, row.spec.i,
                              row.spec.q, row.r2_cir, row.eps, row.bic_flag, row.bic,
                              row.spec == g.chosen_spec))
        if g.fitted:
            c = g.calibration
            par_rows.append((j, s, e, g.size, 1, str(g.chosen_spec), g.in_acb,
                             c.params.k, c.params.theta, c.params.sigma,
                             c.params.feller, c.r2_cir, c.eps, ";".join(c.flags), ""))
            curve_rows.extend((j, k, v) for k, v in c.s_curve)
        else:
            par_rows.append((j, s, e, g.size, 0, "", False, None, None, None,
                             None, None, None, "", g.note))
    write_table(outdir / CANDIDATES,
                ["group", "start", "end", "spec", "p", "i", "q", "r2_cir", "eps",
                 "bic_flag", "bic", "chosen"], cand_rows)
    write_table(outdir / PARAMETERS,
                ["group", "start", "end", "size", "fitted", "spec", "in_acb", "k",
                 "theta", "sigma", "feller", "r2_cir", "eps", "flags", "note"],
                par_rows)
    write_table(outdir / S_CURVES, ["group", "k", "s"], curve_rows)
    fitted = unshifted_fit(report, len(series))
    write_table(outdir / FITTED, ["index", "date", "observed", "fitted"],
                ((i + 1, _date(series, i), float(series.values[i]), fitted[i])
                 for i in range(len(series))))
    summary = {
        "command": "calibrate",
        "maturity": series.maturity_label,
        "n": len(series),
        "segmentation": {"source": report.segmentation.source,
                         "groups": [list(b) for b in report.segmentation.boundaries]},
        "shift": {"alpha": report.shift.alpha, "direction": report.shift.direction},
        "groups_fitted": len(report.fitted_groups),
        "groups_total": len(report.groups),
        "total_r2": report.total_r2,
        "total_eps": report.total_eps,
        "log": list(report.diagnostics),
        "config": meta or {},
    }
    write_json(outdir / SUMMARY, summary)
    return summary


def totals_from_parameters(path) -> tuple[float, float]:
    """Recompute the weighted totals from a written parameter table."""
    rows = [r for r in read_table(path) if r["fitted"] == "1"]
    if not rows:
        return math.nan, math.nan
    return stats.weighted_totals([int(r["size"]) for r in rows],
                                 [float(r["r2_cir"]) for r in rows],
                                 [float(r["eps"]) for r in rows])


# ---------------------------------------------------------------- forecast


def write_forecast(results: Sequence[ForecastResult], score: ForecastScore,
                   baseline: ForecastScore, series, outdir, meta=None) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_table(outdir / FORECAST,
                ["index", "date", "window_start", "window_end", "predicted",
                 "realized", "note"],
                ((f.horizon_index, _date(series, f.horizon_index - 1), f.window[0],
                  f.window[1], f.predicted, f.realized, f.note) for f in results))
    summary = {
        "command": "forecast",
        "maturity": series.maturity_label,
        "positions": len(results),
        "predicted": score.count,
        "r2": score.r2,
        "rmse": score.rmse,
        "last_value_r2": baseline.r2,
        "last_value_rmse": baseline.rmse,
        "config": meta or {},
    }
    write_json(outdir / SUMMARY, summary)
    return summary


# ---------------------------------------------------------------- compare


def write_comparison(rows: Sequence[ComparisonRow], outdir, meta=None) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_table(outdir / COMPARISON,
                ["maturity", "r2_A", "r2_B", "r2_C", "r2_D", "eps_A", "eps_B",
                 "eps_C", "eps_D", "positions"],
                ((r.maturity, *r.r2, *r.eps, r.count) for r in rows))
    summary = {"command": "compare", "maturities": [r.maturity for r in rows],
               "columns": {"A": "CIR#", "B": "CIR (martingale estimates)",
                           "C": "A - B", "D": "C / A"},
               "config": meta or {}}
    write_json(outdir / SUMMARY, summary)
    return summary


# ---------------------------------------------------------------- segment


def write_segments(seg, series, outdir, shift_needed: bool, change_points=(),
                   meta=None) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for j, (s, e) in enumerate(seg.boundaries, start=1):
        g = np.asarray(series.values[s - 1:e], dtype=float)
        rows.append((j, s, e, e - s + 1, float(g.mean()),
                     float(g.std(ddof=1)) if len(g) > 1 else math.nan,
                     stats.harmonic_mean(g)))
    write_table(outdir / SEGMENTS,
                ["group", "start", "end", "size", "mean", "std", "harmonic_mean"], rows)
    summary = {"command": "segment", "maturity": series.maturity_label,
               "source": seg.source, "change_points": list(change_points),
               "groups": [list(b) for b in seg.boundaries],
               "shift_needed": shift_needed, "config": meta or {}}
    write_json(outdir / SUMMARY, summary)
    return summary
