import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import toeplitz
from statsmodels.tsa.arima.model import ARIMA
from statsmodels.tsa.arima_process import ArmaProcess, arma_acovf

from cirsharp import arima, stats
from cirsharp.arima import ArimaSpec
from cirsharp.errors import DataError, DegenerateError


def arma_sample(ar, ma, n, seed, mean=0.0):
    proc = ArmaProcess(np.r_[1, -np.asarray(ar)], np.r_[1, np.asarray(ma)])
    return proc.generate_sample(n, distrvs=np.random.default_rng(seed).standard_normal,
                                burnin=200) + mean


def dense_loglik(w, ar, ma, mu):
    """Concentrated Gaussian log-likelihood from the full covariance matrix."""
    n = len(w)
    gam = arma_acovf(np.r_[1, -np.asarray(ar)], np.r_[1, np.asarray(ma)], nobs=n,
                     sigma2=1.0)
    cov = toeplitz(gam)
    d = np.asarray(w) - mu
    sol = np.linalg.solve(cov, d)
    s2 = d @ sol / n
    _, logdet = np.linalg.slogdet(cov)
    return -0.5 * n * (math.log(2 * math.pi) + math.log(s2) + 1) - 0.5 * logdet, s2


# ---------------------------------------------------------------- spec


def test_spec_grid_and_parse():
    assert len(arima.GRID) == 27
    assert ArimaSpec.parse("(1,2,3)") == ArimaSpec(1, 2, 3)
    assert str(ArimaSpec(3, 0, 1)) == "(3,0,1)"
    with pytest.raises(ValueError):
        ArimaSpec(0, 0, 1)
    with pytest.raises(ValueError):
        ArimaSpec(1, 3, 1)


# ---------------------------------------------------------------- likelihood


@pytest.mark.parametrize("ar,ma,mu", [((0.5,), (0.3,), 0.2),
                                      ((0.6, -0.2), (0.4,), -0.1),
                                      ((0.3,), (0.5, 0.2, -0.1), 0.0),
                                      ((0.2, 0.1, 0.3), (-0.6, 0.2), 1.0)])
def test_exact_loglik_matches_dense_oracle(ar, ma, mu):
    w = arma_sample(ar, ma, 40, 7, mu)
    ll, s2 = arima.exact_loglik(w, ar, ma, mu)
    ref_ll, ref_s2 = dense_loglik(w, ar, ma, mu)
    assert ll == pytest.approx(ref_ll, abs=1e-6)
    assert s2 == pytest.approx(ref_s2, rel=1e-8)


def test_fit_reaches_statsmodels_optimum():
    y = arma_sample((0.7,), (0.3,), 200, 11, 2.0)
    ours = arima.fit_arima(y, ArimaSpec(1, 0, 1))
    ref = ARIMA(y, order=(1, 0, 1), trend="c").fit()
    assert ours.loglik >= ref.llf - 1e-3
    assert ours.ar_coeffs[0] == pytest.approx(ref.params[1], abs=0.02)
    assert ours.ma_coeffs[0] == pytest.approx(ref.params[2], abs=0.02)


def test_bic_examples():
    fit = arima.fit_arima(arma_sample((0.5,), (0.2,), 50, 1), ArimaSpec(1, 0, 1))
    assert fit.bic == pytest.approx(arima.bic_of(fit))
    zero = dataclasses.replace(fit, loglik=0.0)
    assert arima.bic_of(zero, n=math.e ** 2) == pytest.approx(8.0)
    big = dataclasses.replace(zero, spec=ArimaSpec(3, 0, 3))
    assert arima.bic_of(zero, 50) < arima.bic_of(big, 50)


# ---------------------------------------------------------------- fitting


def test_ar1_recovery():
    est = [arima.fit_arima(arma_sample((0.7,), (), 300, s), ArimaSpec(1, 0, 1)).ar_coeffs[0]
           for s in range(15)]
    assert abs(np.median(est) - 0.7) < 0.1


def test_constant_series_rejected():
    with pytest.raises(DegenerateError):
        arima.fit_arima(np.full(30, 2.0), ArimaSpec(1, 0, 1))
    with pytest.raises(DataError):
        arima.fit_arima(np.arange(4.0), ArimaSpec(1, 0, 1))


def test_random_walk_first_difference():
    psi1, adf_ok = [], 0
    for s in range(12):
        y = np.random.default_rng(s).standard_normal(200).cumsum()
        fit = arima.fit_arima(y, ArimaSpec(1, 1, 1))
        # the differenced model is white noise: its first impulse weight
        # phi + theta vanishes even when phi and theta cancel each other
        psi1.append(fit.ar_coeffs[0] + fit.ma_coeffs[0])
        adf_ok += stats.unit_root_test(fit.residuals).rejected
    assert abs(np.median(psi1)) < 0.1
    assert adf_ok >= 11


@pytest.mark.parametrize("spec", [ArimaSpec(1, 0, 1), ArimaSpec(2, 1, 1),
                                  ArimaSpec(1, 2, 2), ArimaSpec(3, 0, 3)])
def test_fit_invariants(spec):
    y = arma_sample((0.6,), (0.3,), 64, 5, 3.0).cumsum() if spec.i else \
        arma_sample((0.6,), (0.3,), 64, 5, 3.0)
    fit = arima.fit_arima(y, spec)
    m0 = max(spec.p, spec.q) + spec.i
    assert len(fit.residuals) == len(y)
    assert np.all(fit.residuals[:m0] == 0)
    assert 0.5 <= np.var(fit.residuals[m0:], ddof=1) <= 2.0
    assert arima._ar_roots_ok(np.array(fit.ar_coeffs))
    w = arima.difference(y, spec.i)
    np.testing.assert_allclose(arima.reconstruct(fit, y), w, atol=1e-8 * np.abs(w).max())
    assert fit.r2_arima == pytest.approx(stats.r_squared(y, y - fit.errors))


@pytest.mark.parametrize("p,q", [(1, 1), (2, 1), (1, 2)])
def test_differencing_equivalence(p, q):
    y = arma_sample((0.5,), (0.2,), 60, 3, 1.0).cumsum()
    a = arima.fit_arima(y, ArimaSpec(p, 1, q))
    b = arima.fit_arima(np.diff(y), ArimaSpec(p, 0, q))
    np.testing.assert_allclose(a.ar_coeffs, b.ar_coeffs, atol=1e-6)
    np.testing.assert_allclose(a.ma_coeffs, b.ma_coeffs, atol=1e-6)
    assert a.intercept == pytest.approx(b.intercept, abs=1e-6)
    assert a.loglik == pytest.approx(b.loglik, abs=1e-6)


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1))
def test_reconstruction_property(seed):
    rng = np.random.default_rng(seed)
    spec = arima.GRID[rng.integers(len(arima.GRID))]
    y = rng.standard_normal(40).cumsum() * 0.2 + rng.standard_normal(40)
    try:
        fit = arima.fit_arima(y, spec)
    except arima.CirSharpError:
        return
    w = arima.difference(y, spec.i)
    np.testing.assert_allclose(arima.reconstruct(fit, y), w, atol=1e-8 * np.abs(w).max())


# ---------------------------------------------------------------- candidates


def test_identical_values_give_empty_set():
    cs = arima.enumerate_candidates(np.full(8, 1.25))
    assert cs.entries == ()
    assert cs.suboptimal == [] and cs.i_ac == [] and cs.i_acb == []


def test_short_group_rejected():
    with pytest.raises(DataError):
        arima.enumerate_candidates(np.arange(7.0))


def check_candidate_set(cs):
    best = {}
    for e in cs.entries:
        best[e.spec.i] = min(best.get(e.spec.i, math.inf), arima.bic_of(e.fit))
    for e in cs.entries:
        assert e.satisfies_bic == (arima.bic_of(e.fit) == best[e.spec.i])
        if e.suboptimal:
            assert e.shocks is not None and len(e.shocks) == e.fit.nobs + e.spec.i
    ac = {id(e) for e in cs.i_ac}
    assert all(id(e) in ac for e in cs.i_acb)


def test_white_noise_candidates(rng):
    minimal = 0
    for s in range(6):
        cs = arima.enumerate_candidates(np.random.default_rng(s).standard_normal(40) + 2)
        check_candidate_set(cs)
        assert len(cs.entries) >= 2
        flagged = [e for e in cs.entries if e.satisfies_bic and e.spec.i == 0]
        minimal += flagged[0].spec == ArimaSpec(1, 0, 1)
    assert minimal >= 4


def test_arma_group_candidates_with_cir_map():
    y = arma_sample((0.8,), (0.5,), 64, 2, 2.0)
    cs = arima.enumerate_candidates(y)
    check_candidate_set(cs)
    assert ArimaSpec(1, 0, 1) in {e.spec for e in cs.suboptimal}
    for e in cs.suboptimal:
        cs.r2_cir[e.spec] = 0.9 if e.spec.p == 1 else 0.4
    check_candidate_set(cs)
    assert all(e.spec.p == 1 for e in cs.i_ac)


def test_threads_give_same_result():
    y = arma_sample((0.8,), (0.5,), 32, 4, 2.0)
    a = arima.enumerate_candidates(y)
    b = arima.enumerate_candidates(y, arima.DiagnosticsConfig(threads=4))
    assert [e.spec for e in a.entries] == [e.spec for e in b.entries]
    for x, z in zip(a.entries, b.entries):
        assert x.fit.loglik == z.fit.loglik
