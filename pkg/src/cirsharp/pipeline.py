"""The ARIMA-CIR calibration loop, model selection and rolling forecasts.

Group indices are 1-based and inclusive throughout, as in `Segmentation`.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import arima, cir, market_data, segmentation, stats
from .arima import ArimaSpec, CandidateSet, DiagnosticsConfig
from .errors import CirSharpError, DataError, NumericalError
from .market_data import RateSeries, ShiftRecord
from .segmentation import Segmentation

log = logging.getLogger(__name__)

SHRINK_STEP = 8
R2_CIR_MIN = 0.5


class NoEligibleModelError(NumericalError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    group_size: int = 8
    delta: float = market_data.DEFAULT_DELTA
    alpha: float = stats.DEFAULT_ALPHA
    relax_pac: bool = False
    r2_arima_min: float = arima.R2_ARIMA_MIN
    r2_cir_min: float = R2_CIR_MIN
    k_bounds: tuple = (cir.K_LOWER, cir.K_UPPER)
    shrink_step: int = SHRINK_STEP
    min_group_len: int = arima.MIN_GROUP_LEN
    shift_threshold: float = market_data.DEFAULT_SHIFT_THRESHOLD
    segmentation_mode: str = "fixed"
    min_segment_len: int = segmentation.DEFAULT_MIN_SEGMENT_LEN
    k_max: int = segmentation.DEFAULT_K_MAX
    threads: int = 1

    @property
    def diagnostics(self) -> DiagnosticsConfig:
        return DiagnosticsConfig(self.alpha, self.relax_pac, self.r2_arima_min,
                                 self.threads)


@dataclass(frozen=True)
class CandidateRow:
    spec: ArimaSpec
    r2_cir: float
    eps: float
    bic_flag: bool
    bic: float = math.nan


@dataclass(frozen=True)
class GroupResult:
    range: tuple  # (start, end), 1-based inclusive
    chosen_spec: Optional[ArimaSpec]
    in_acb: bool
    calibration: Optional[cir.GroupCalibration]
    candidate_table: tuple = ()
    note: str = ""

    @property
    def fitted(self) -> bool:
        return self.calibration is not None

    @property
    def size(self) -> int:
        return self.range[1] - self.range[0] + 1


@dataclass(frozen=True)
class CalibrationReport:
    segmentation: Segmentation
    shift: ShiftRecord
    groups: tuple
    total_r2: float
    total_eps: float
    diagnostics: tuple = ()

    @property
    def fitted_groups(self) -> list[GroupResult]:
        return [g for g in self.groups if g.fitted]

    def recompute_totals(self) -> tuple[float, float]:
        fg = self.fitted_groups
        if not fg:
            return math.nan, math.nan
        return stats.weighted_totals([g.size for g in fg],
                                     [g.calibration.r2_cir for g in fg],
                                     [g.calibration.eps for g in fg])


@dataclass(frozen=True)
class ForecastResult:
    horizon_index: int  # 1-based index of the predicted observation
    predicted: float
    realized: float
    window: tuple  # (start, end), 1-based inclusive
    note: str = ""

    @property
    def predicted_ok(self) -> bool:
        return math.isfinite(self.predicted)


# ---------------------------------------------------------------- checks


def check1(group, config: PipelineConfig = PipelineConfig(), group_index: int = 0
           ) -> tuple[bool, CandidateSet]:
    """Conditions 1-4: is any grid ARIMA spec acceptable for the group?"""
    try:
        cs = arima.enumerate_candidates(group, config.diagnostics, group_index)
    except CirSharpError as exc:
        log.info("group %d: candidate search failed: %s", group_index, exc)
        return False, CandidateSet(group_index, ())
    return bool(cs.suboptimal), cs


def check2(group, candidates: CandidateSet, config: PipelineConfig = PipelineConfig()
           ) -> tuple[bool, list]:
    """Condition 6: CIR calibration driven by each sub-optimal candidate.

    Returns the flag and one calibration (or None on failure) per entry of
    ``candidates.suboptimal``; the candidate set's R^2 map is filled in.
    """
    cals = []
    for entry in candidates.suboptimal:
        try:
            cal = cir.calibrate_group(group, entry.shocks, config.delta,
                                      config.k_bounds)
        except CirSharpError as exc:
            log.info("CIR calibration for ARIMA%s failed: %s", entry.spec, exc)
            cal = None
        cals.append(cal)
        if cal is not None and math.isfinite(cal.r2_cir):
            candidates.r2_cir[entry.spec] = cal.r2_cir
    ok = any(c is not None and c.r2_cir > config.r2_cir_min for c in cals)
    return ok, cals


def select_optimal(rows: Sequence[CandidateRow], r2_min: float = R2_CIR_MIN
                   ) -> ArimaSpec:
    """Smallest-RMSE spec among CIR fits with R^2 above `r2_min`.

    Specs that also meet the BIC condition take precedence when any exist.
    Ties: lower BIC, then smaller p + i + q, then lexicographic (p, i, q).
    """
    eligible = [r for r in rows if r.r2_cir > r2_min]
    if not eligible:
        raise NoEligibleModelError(f"no candidate with R^2_CIR > {r2_min}")
    acb = [r for r in eligible if r.bic_flag]
    pool = acb or eligible
    best = min(pool, key=lambda r: (r.eps, r.bic if math.isfinite(r.bic) else math.inf,
                                    r.spec.order_sum, (r.spec.p, r.spec.i, r.spec.q)))
    return best.spec


# ---------------------------------------------------------------- one group


@dataclass
class _GroupOutcome:
    ok: bool
    result: GroupResult


def evaluate_group(values, start: int, end: int,
                   config: PipelineConfig = PipelineConfig()) -> _GroupOutcome:
    """Run check1, check2 and model selection for values[start-1:end]."""
    group = np.asarray(values, dtype=float)[start - 1:end]
    ok1, cs = check1(group, config, start)
    if not ok1:
        return _GroupOutcome(False, GroupResult((start, end), None, False, None,
                                                note="check1 failed"))
    ok2, cals = check2(group, cs, config)
    rows, by_spec = [], {}
    for entry, cal in zip(cs.suboptimal, cals):
        if cal is None:
            continue
        rows.append(CandidateRow(entry.spec, cal.r2_cir, cal.eps,
                                 entry.satisfies_bic, entry.fit.bic))
        by_spec[entry.spec] = cal
    if not ok2:
        return _GroupOutcome(False, GroupResult((start, end), None, False, None,
                                                tuple(rows), "check2 failed"))
    spec = select_optimal(rows, config.r2_cir_min)
    in_acb = any(r.spec == spec and r.bic_flag for r in rows)
    return _GroupOutcome(True, GroupResult((start, end), spec, in_acb,
                                           by_spec[spec], tuple(rows)))


class _Evaluator:
    """Memoises group evaluations so segmentation hooks and the main loop share work."""

    def __init__(self, values, config):
        self.values = np.asarray(values, dtype=float)
        self.config = config
        self.cache = {}

    def __call__(self, start: int, end: int) -> _GroupOutcome:
        key = (start, end)
        if key not in self.cache:
            self.cache[key] = evaluate_group(self.values, start, end, self.config)
        return self.cache[key]

    def passes(self, start: int, end: int) -> bool:
        return self(start, end).ok


def shrink_group(start: int, end: int, step: int = SHRINK_STEP
                 ) -> tuple[tuple[int, int], tuple[int, int]]:
    """Split a failing group into its first n - step points and the trailing step."""
    return (start, end - step), (end - step + 1, end)


def run_arima_cir(series, seg: Segmentation, config: PipelineConfig = PipelineConfig(),
                  _evaluator: Optional[_Evaluator] = None) -> CalibrationReport:
    """Calibrate every group of an already shifted series.

    A group failing either check is shrunk by `config.shrink_step`; the
    removed tail is queued as the next group. Groups that cannot shrink
    without dropping below `config.min_group_len` are reported unfitted and
    left out of the totals.
    """
    values = np.asarray(getattr(series, "values", series), dtype=float)
    if seg.n != len(values):
        raise DataError(f"segmentation covers {seg.n} points, series has {len(values)}")
    ev = _evaluator or _Evaluator(values, config)
    pending = deque(seg.boundaries)
    results, log_lines = [], []
    while pending:
        start, end = pending.popleft()
        out = ev(start, end)
        if out.ok:
            results.append(out.result)
            continue
        if end - start + 1 - config.shrink_step >= config.min_group_len:
            head, tail = shrink_group(start, end, config.shrink_step)
            log_lines.append(f"group {start}-{end} {out.result.note}; "
                             f"shrunk to {head[0]}-{head[1]} + {tail[0]}-{tail[1]}")
            pending.appendleft(tail)
            pending.appendleft(head)
            continue
        log_lines.append(f"group {start}-{end} unfitted ({out.result.note})")
        log.warning("group %d-%d could not be fitted", start, end)
        results.append(out.result)
    final = Segmentation(tuple(r.range for r in results), seg.source)
    fitted = [r for r in results if r.fitted]
    if fitted:
        total_r2, total_eps = stats.weighted_totals(
            [r.size for r in fitted], [r.calibration.r2_cir for r in fitted],
            [r.calibration.eps for r in fitted])
    else:
        total_r2 = total_eps = math.nan
    if len(fitted) < len(results):
        log_lines.append(f"WARNING: {len(results) - len(fitted)} of {len(results)} "
                         "groups unfitted; totals cover fitted groups only")
    return CalibrationReport(final, market_data.IDENTITY_SHIFT, tuple(results),
                             total_r2, total_eps, tuple(log_lines))


def build_segmentation(series: RateSeries, config: PipelineConfig,
                       hook=None) -> Segmentation:
    """Segmentation for the configured mode, before any shift."""
    n = len(series)
    fixed = segmentation.fixed_partition(n, config.group_size)
    if config.segmentation_mode == "fixed":
        return fixed
    if config.segmentation_mode == "anova_merged":
        return segmentation.auto_merge(series.values, fixed, config.alpha)
    if config.segmentation_mode == "change_point":
        cps = segmentation.detect_change_points(series, config.k_max,
                                                config.min_segment_len)
        if hook is None:
            return cps.segmentation(n)
        return segmentation.adjust_change_points(series, cps, hook,
                                                 config.min_segment_len)
    raise ValueError(f"unknown segmentation mode {config.segmentation_mode!r}")


def calibrate_series(series: RateSeries, config: PipelineConfig = PipelineConfig()
                     ) -> CalibrationReport:
    """Segment, shift when needed, and run the ARIMA-CIR loop.

    Group fitted values in the returned report stay on the shifted scale;
    use `unshifted_fit` to map them back.
    """
    raw_seg = build_segmentation(series, config)
    shifted, record = market_data.apply_shift(
        series, market_data.needs_shift(series, raw_seg, config.shift_threshold))
    ev = _Evaluator(shifted.values, config)
    if config.segmentation_mode == "change_point":
        seg = build_segmentation(shifted, config, hook=ev.passes)
    else:
        seg = raw_seg
    report = run_arima_cir(shifted, seg, config, ev)
    return CalibrationReport(report.segmentation, record, report.groups,
                             report.total_r2, report.total_eps, report.diagnostics)


def unshifted_fit(report: CalibrationReport, n: int) -> np.ndarray:
    """Fitted values on the original scale; NaN over unfitted groups."""
    out = np.full(n, math.nan)
    for g in report.fitted_groups:
        s, e = g.range
        out[s - 1:e] = market_data.unshift(g.calibration.fitted, report.shift)
    return out


# ---------------------------------------------------------------- forecasting


def _window_shift(window: np.ndarray, threshold: float):
    seg = Segmentation(((1, len(window)),))
    triggered = market_data.needs_shift(window, seg, threshold)
    if not triggered:
        return window, market_data.IDENTITY_SHIFT
    ws, record = market_data.apply_shift(RateSeries(window), True)
    return ws.values, record


def forecast_one(window, config: PipelineConfig = PipelineConfig()) -> float:
    """CIR# one-step prediction from a single-group window.

    The window is shifted if needed, calibrated as one group, and the last
    observation is stepped forward with a zero shock.
    """
    window = np.asarray(window, dtype=float)
    if np.ptp(window) == 0:
        # theta-hat equals the constant and sigma-hat is zero: every k keeps
        # the zero-shock step at the drift fixed point
        return float(window[-1])
    shifted, record = _window_shift(window, config.shift_threshold)
    out = evaluate_group(shifted, 1, len(shifted), config)
    if not out.ok:
        raise NoEligibleModelError(out.result.note)
    pred = cir.forecast_step(shifted[-1], out.result.calibration.params, config.delta)
    return float(market_data.unshift([pred], record)[0])


def classic_forecast_one(window, config: PipelineConfig = PipelineConfig()) -> float:
    """Martingale-estimated CIR, conditional-mean one-step prediction."""
    window = np.asarray(window, dtype=float)
    shifted, record = _window_shift(window, config.shift_threshold)
    p = cir.martingale_estimate(shifted, config.delta)
    a = math.exp(-p.k * config.delta)
    pred = p.theta + (shifted[-1] - p.theta) * a
    return float(market_data.unshift([pred], record)[0])


def _rolling(values, window_m, predictor, min_m):
    values = np.asarray(getattr(values, "values", values), dtype=float)
    n = len(values)
    if window_m < min_m:
        raise DataError(f"forecast window {window_m} below the minimum {min_m}")
    if n <= window_m:
        raise DataError(f"series of length {n} not longer than window {window_m}")
    out = []
    for t in range(window_m, n):  # 0-based index of the target
        window = values[t - window_m:t]
        note = ""
        try:
            pred = predictor(window)
        except CirSharpError as exc:
            pred, note = math.nan, str(exc) or type(exc).__name__
        out.append(ForecastResult(t + 1, pred, float(values[t]),
                                  (t - window_m + 1, t), note))
    return out


def rolling_forecast(series, window_m: int = 8,
                     config: PipelineConfig = PipelineConfig()) -> list[ForecastResult]:
    """One-step CIR# forecasts from every trailing window of length `window_m`.

    The prediction for observation t uses observations t - window_m .. t - 1
    only. Windows whose pipeline fails give a NaN prediction with a note.
    """
    return _rolling(series, window_m, lambda w: forecast_one(w, config),
                    arima.MIN_GROUP_LEN)


def rolling_classic(series, window_m: int = 14,
                    config: PipelineConfig = PipelineConfig()) -> list[ForecastResult]:
    return _rolling(series, window_m, lambda w: classic_forecast_one(w, config),
                    cir.MARTINGALE_MIN_WINDOW)


@dataclass(frozen=True)
class ForecastScore:
    r2: float
    rmse: float
    count: int


def score_forecasts(results: Sequence[ForecastResult],
                    positions: Optional[set] = None) -> ForecastScore:
    """R^2 and RMSE over predicted positions (optionally a given subset)."""
    used = [f for f in results if f.predicted_ok
            and (positions is None or f.horizon_index in positions)]
    if len(used) < 2:
        return ForecastScore(math.nan, math.nan, len(used))
    real = [f.realized for f in used]
    pred = [f.predicted for f in used]
    try:
        r2 = stats.r_squared(real, pred)
    except NumericalError:
        r2 = math.nan
    return ForecastScore(r2, stats.rmse(real, pred), len(used))


def last_value_score(series, results: Sequence[ForecastResult]) -> ForecastScore:
    """The random-walk baseline scored on the same positions as `results`."""
    values = np.asarray(getattr(series, "values", series), dtype=float)
    naive = [ForecastResult(f.horizon_index, float(values[f.horizon_index - 2]),
                            f.realized, f.window)
             for f in results if f.predicted_ok]
    return score_forecasts(naive)


@dataclass(frozen=True)
class ComparisonRow:
    maturity: str
    r2: tuple  # (A: CIR#, B: CIR, C = A - B, D = C / A)
    eps: tuple
    count: int


def _abcd(a, b):
    c = a - b
    return (a, b, c, c / a if a != 0 else math.nan)


def compare_with_cir(series, m_sharp: int = 8, m_classic: int = 14,
                     config: PipelineConfig = PipelineConfig()) -> ComparisonRow:
    """CIR# against the martingale-estimated CIR on common forecast positions."""
    if m_sharp < arima.MIN_GROUP_LEN:
        raise DataError(f"CIR# window must be >= {arima.MIN_GROUP_LEN}")
    if m_classic < cir.MARTINGALE_MIN_WINDOW:
        raise DataError(f"CIR window must be >= {cir.MARTINGALE_MIN_WINDOW}")
    sharp = rolling_forecast(series, m_sharp, config)
    classic = rolling_classic(series, m_classic, config)
    common = ({f.horizon_index for f in sharp if f.predicted_ok}
              & {f.horizon_index for f in classic if f.predicted_ok})
    a = score_forecasts(sharp, common)
    b = score_forecasts(classic, common)
    return ComparisonRow(getattr(series, "maturity_label", ""),
                         _abcd(a.r2, b.r2), _abcd(a.rmse, b.rmse), len(common))
