import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cirsharp import arima, cir, pipeline, synthetic
from cirsharp.arima import ArimaSpec
from cirsharp.cir import CirParams
from cirsharp.errors import DataError
from cirsharp.pipeline import CandidateRow, PipelineConfig
from cirsharp.segmentation import Segmentation
from statsmodels.tsa.arima_process import ArmaProcess

DELTA = 1 / 30

# reference candidate rows for an 8-point group: (spec, R^2_CIR, eps)
TABLE_9_16 = [("(1,0,1)", 0.6842, 0.2090), ("(2,0,2)", 0.7799, 0.2588),
              ("(3,0,2)", 0.6418, 0.2661), ("(1,1,1)", 0.7378, 0.2043),
              ("(1,1,2)", 0.8472, 0.1554), ("(2,1,1)", 0.6842, 0.2169),
              ("(2,1,2)", 0.7799, 0.2012), ("(3,1,2)", 0.6418, 0.2333)]


def rows(table, flagged=()):
    return [CandidateRow(ArimaSpec.parse(s), r2, e, s in flagged) for s, r2, e in table]


def fake_calibration(r2=0.8, eps=0.1, n=8):
    return cir.GroupCalibration(CirParams(1.0, 1.0, 0.1), np.ones(n), r2, eps)


@pytest.fixture(scope="module")
def bundled_values():
    return synthetic.bundled_series().values


# ---------------------------------------------------------------- checks


def test_check1_arma_group():
    y = ArmaProcess([1, -0.8], [1, 0.5]).generate_sample(
        64, distrvs=np.random.default_rng(2).standard_normal, burnin=200) + 2
    ok, cs = pipeline.check1(y)
    assert ok and cs.suboptimal


def test_check1_constant_and_tiny_groups():
    ok, cs = pipeline.check1(np.full(8, 1.5))
    assert not ok and cs.suboptimal == []
    for s in range(5):
        ok, _ = pipeline.check1(np.random.default_rng(s).standard_normal(8) + 3)
        assert ok in (True, False)


def test_check2_own_shocks_round_trip():
    z = np.random.default_rng(1).standard_normal(16)
    group = synthetic.milstein_path(0.5, CirParams(6.0, 2.5, 0.2), z[1:], DELTA)
    cs = SimpleNamespace(suboptimal=[SimpleNamespace(spec=ArimaSpec(1, 0, 1), shocks=z)],
                         r2_cir={})
    ok, cals = pipeline.check2(group, cs)
    assert ok and cals[0].r2_cir > 0.9
    assert cs.r2_cir[ArimaSpec(1, 0, 1)] == cals[0].r2_cir


def test_check2_adversarial_shocks_do_not_throw():
    z = np.random.default_rng(1).standard_normal(16)
    group = synthetic.milstein_path(2.5, CirParams(1.0, 2.5, 0.2), z[1:], DELTA)
    noise = 50 * np.random.default_rng(7).standard_normal(16)
    cs = SimpleNamespace(suboptimal=[SimpleNamespace(spec=ArimaSpec(1, 0, 1), shocks=noise)],
                         r2_cir={})
    ok, cals = pipeline.check2(group, cs)
    assert ok in (True, False) and len(cals) == 1


def test_check2_strict_threshold(monkeypatch):
    monkeypatch.setattr(cir, "calibrate_group", lambda *a, **k: fake_calibration(r2=0.5))
    cs = SimpleNamespace(suboptimal=[SimpleNamespace(spec=ArimaSpec(1, 0, 1),
                                                     shocks=np.zeros(8))], r2_cir={})
    ok, _ = pipeline.check2(np.ones(8), cs)
    assert not ok


# ---------------------------------------------------------------- selection


def test_select_reference_group_9_16():
    assert pipeline.select_optimal(rows(TABLE_9_16)) == ArimaSpec(1, 1, 2)


def test_select_restricts_to_bic_set():
    # with a BIC mark on (3,0,2), the restricted rule
    # prefers it over the smaller-RMSE (1,1,2)
    assert pipeline.select_optimal(rows(TABLE_9_16, {"(3,0,2)"})) == ArimaSpec(3, 0, 2)


def test_select_tie_breaks():
    tied = [CandidateRow(ArimaSpec(2, 1, 2), 0.7, 0.1, False),
            CandidateRow(ArimaSpec(1, 0, 1), 0.7, 0.1, False)]
    assert pipeline.select_optimal(tied) == ArimaSpec(1, 0, 1)
    by_bic = [CandidateRow(ArimaSpec(1, 0, 1), 0.7, 0.1, False, 5.0),
              CandidateRow(ArimaSpec(2, 1, 2), 0.7, 0.1, False, 3.0)]
    assert pipeline.select_optimal(by_bic) == ArimaSpec(2, 1, 2)
    lex = [CandidateRow(ArimaSpec(2, 0, 1), 0.7, 0.1, False),
           CandidateRow(ArimaSpec(1, 0, 2), 0.7, 0.1, False)]
    assert pipeline.select_optimal(lex) == ArimaSpec(1, 0, 2)


def test_select_empty_eligible():
    with pytest.raises(pipeline.NoEligibleModelError):
        pipeline.select_optimal(rows([("(1,0,1)", 0.5, 0.1), ("(2,0,1)", 0.3, 0.05)]))


@given(st.lists(st.tuples(st.sampled_from(arima.GRID), st.floats(0, 1),
                          st.floats(0.001, 1), st.booleans()), min_size=1, max_size=12,
                unique_by=lambda t: t[0]))
def test_select_output_in_bic_set_when_nonempty(entries):
    cand = [CandidateRow(s, r2, e, b) for s, r2, e, b in entries]
    eligible = [c for c in cand if c.r2_cir > 0.5]
    if not eligible:
        with pytest.raises(pipeline.NoEligibleModelError):
            pipeline.select_optimal(cand)
        return
    chosen = pipeline.select_optimal(cand)
    row = next(c for c in cand if c.spec == chosen)
    pool = [c for c in eligible if c.bic_flag] or eligible
    assert row in pool
    assert row.eps == min(c.eps for c in pool)


# ---------------------------------------------------------------- loop


def scripted(monkeypatch, passes):
    """Replace group evaluation by a rule on (start, end)."""
    calls = []

    def fake(values, start, end, config=PipelineConfig()):
        calls.append((start, end))
        n = end - start + 1
        if passes(start, end):
            res = pipeline.GroupResult((start, end), ArimaSpec(1, 0, 1), False,
                                       fake_calibration(0.6 + 0.01 * n, 0.1, n))
            return pipeline._GroupOutcome(True, res)
        return pipeline._GroupOutcome(False, pipeline.GroupResult(
            (start, end), None, False, None, note="check1 failed"))

    monkeypatch.setattr(pipeline, "evaluate_group", fake)
    return calls


def test_shrink_path(monkeypatch):
    calls = scripted(monkeypatch, lambda s, e: e - s + 1 <= 8)
    rep = pipeline.run_arima_cir(np.ones(24), Segmentation(((1, 16), (17, 24))))
    assert calls == [(1, 16), (1, 8), (9, 16), (17, 24)]
    assert rep.segmentation.boundaries == ((1, 8), (9, 16), (17, 24))
    assert any("shrunk to 1-8 + 9-16" in line for line in rep.diagnostics)
    assert all(g.fitted for g in rep.groups)


def test_unfitted_group_excluded_with_warning(monkeypatch):
    scripted(monkeypatch, lambda s, e: s != 9)
    rep = pipeline.run_arima_cir(np.ones(24), Segmentation(((1, 8), (9, 16), (17, 24))))
    assert [g.fitted for g in rep.groups] == [True, False, True]
    assert rep.total_r2 == pytest.approx(0.68)
    assert any(line.startswith("WARNING") for line in rep.diagnostics)
    scripted(monkeypatch, lambda s, e: False)
    rep = pipeline.run_arima_cir(np.ones(8), Segmentation(((1, 8),)))
    assert math.isnan(rep.total_r2) and math.isnan(rep.total_eps)


def test_segmentation_length_mismatch():
    with pytest.raises(DataError):
        pipeline.run_arima_cir(np.ones(10), Segmentation(((1, 8),)))


def test_single_group_totals(bundled_values):
    x = bundled_values[:17]
    rep = pipeline.run_arima_cir(x, Segmentation(((1, 17),)))
    (g,) = rep.groups
    assert g.fitted
    assert rep.total_r2 == g.calibration.r2_cir
    # the weighted root scales a single group's RMSE by sqrt(n)
    assert rep.total_eps == pytest.approx(g.calibration.eps * math.sqrt(17), rel=1e-12)
    assert g.chosen_spec in {r.spec for r in g.candidate_table}
    if any(r.bic_flag and r.r2_cir > 0.5 for r in g.candidate_table):
        assert g.in_acb


def test_calibrate_series_deterministic_and_totals_recompute(bundled_values):
    series = synthetic.bundled_series()
    cfg = PipelineConfig(group_size=17)
    a = pipeline.calibrate_series(series, cfg)
    b = pipeline.calibrate_series(series, cfg)
    assert (a.total_r2, a.total_eps) == (b.total_r2, b.total_eps)
    for ga, gb in zip(a.groups, b.groups, strict=True):
        assert (ga.range, ga.chosen_spec, ga.candidate_table) == \
            (gb.range, gb.chosen_spec, gb.candidate_table)
        if ga.fitted:
            assert ga.calibration.params == gb.calibration.params
            np.testing.assert_array_equal(ga.calibration.fitted, gb.calibration.fitted)
    assert a.recompute_totals() == (a.total_r2, a.total_eps)
    fit = pipeline.unshifted_fit(a, len(series))
    for g in a.fitted_groups:
        assert fit[g.range[0] - 1] == pytest.approx(series.values[g.range[0] - 1])


# ---------------------------------------------------------------- forecasting


def test_constant_series_forecast():
    res = pipeline.rolling_forecast(np.full(12, 1.3), 8)
    assert [f.predicted for f in res] == [1.3] * 4


def test_forecast_no_look_ahead(bundled_values):
    x = bundled_values[:18].copy()
    t = 13  # 1-based: predictions for indices <= t may use observations < t only
    base = pipeline.rolling_forecast(x, 8)
    y = x.copy()
    y[t:] = 1e6
    bad = pipeline.rolling_forecast(y, 8)
    for f, g in zip(base, bad):
        assert f.window[1] - f.window[0] + 1 == 8 and f.horizon_index == f.window[1] + 1
        if f.horizon_index <= t:
            assert f.predicted == g.predicted or (math.isnan(f.predicted)
                                                  and math.isnan(g.predicted))


def test_forecast_window_limits():
    with pytest.raises(DataError):
        pipeline.rolling_forecast(np.ones(12), 7)
    with pytest.raises(DataError):
        pipeline.rolling_forecast(np.ones(8), 8)


def test_last_value_score_uses_same_positions():
    res = [pipeline.ForecastResult(3, 2.0, 3.0, (1, 2)),
           pipeline.ForecastResult(4, math.nan, 4.0, (2, 3)),
           pipeline.ForecastResult(5, 4.0, 5.0, (3, 4))]
    base = pipeline.last_value_score(np.arange(1.0, 6.0), res)
    assert base.count == 2 and base.rmse == pytest.approx(1.0)


def test_compare_layout_and_window_floor():
    true = CirParams(20.0, 2.0, 0.8)
    x = synthetic.exact_cir_path(2.0, true, 24, DELTA, np.random.default_rng(3))
    row = pipeline.compare_with_cir(x, 8, 14)
    a, b, c, d = row.eps
    assert c == pytest.approx(a - b) and d == pytest.approx(c / a)
    assert row.r2[2] == pytest.approx(row.r2[0] - row.r2[1])
    assert 0 < row.count <= 24 - 14
    with pytest.raises(DataError):
        pipeline.compare_with_cir(x, 8, 13)
    with pytest.raises(DataError):
        pipeline.compare_with_cir(x, 7, 14)
