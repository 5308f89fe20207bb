"""Goodness-of-fit measures, one-way ANOVA and the residual diagnostics.

F and chi-square tail probabilities come from ``scipy.special`` (regularized
incomplete beta / gamma); everything else is computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special
from statsmodels.tsa.adfvalues import mackinnonp

from .errors import DataError, DegenerateError

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class AnovaTable:
    ss_groups: float
    ss_error: float
    ss_total: float
    df_groups: int
    df_error: int
    df_total: int
    ms_groups: float
    ms_error: float
    f_stat: float
    p_value: float

    def check(self, rtol: float = 1e-9) -> None:
        """Assert the additivity and ratio identities of the table."""
        scale = max(abs(self.ss_total), 1.0)
        assert abs(self.ss_groups + self.ss_error - self.ss_total) <= rtol * scale
        assert self.df_groups + self.df_error == self.df_total
        assert math.isclose(self.ms_groups, self.ss_groups / self.df_groups,
                            rel_tol=1e-12)
        assert math.isclose(self.ms_error, self.ss_error / self.df_error,
                            rel_tol=1e-12)
        assert math.isclose(self.f_stat, self.ms_groups / self.ms_error,
                            rel_tol=1e-12)
        assert 0.0 <= self.p_value <= 1.0


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    reject_at: float
    rejected: bool
    name: str = ""

    __test__ = False  # not a pytest class


def _result(name, statistic, p_value, alpha):
    p_value = min(max(float(p_value), 0.0), 1.0)
    return TestResult(float(statistic), p_value, alpha, p_value < alpha, name)


def _pair(observed, fitted):
    observed = np.asarray(observed, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if observed.shape != fitted.shape or observed.ndim != 1:
        raise ValueError(
            f"length mismatch: {observed.shape} vs {fitted.shape}")
    return observed, fitted


def r_squared(observed, fitted) -> float:
    """1 - var(residuals)/var(observed), residuals centred on their mean.

    Can be negative. Equals 1 whenever the residuals are constant.
    """
    observed, fitted = _pair(observed, fitted)
    if len(observed) < 2:
        raise ValueError("r_squared needs at least 2 observations")
    denom = np.sum((observed - observed.mean()) ** 2)
    if not denom > 0:
        raise DegenerateError("observed series is constant; R^2 undefined")
    e = observed - fitted
    return float(1.0 - np.sum((e - e.mean()) ** 2) / denom)


def rmse(observed, fitted) -> float:
    observed, fitted = _pair(observed, fitted)
    if len(observed) < 1:
        raise ValueError("rmse of an empty sequence")
    return float(np.sqrt(np.mean((observed - fitted) ** 2)))


def weighted_totals(group_sizes: Sequence[int], group_r2: Sequence[float],
                    group_eps: Sequence[float]) -> tuple[float, float]:
    """Whole-sample R^2 and RMSE from per-group values.

    R^2 is the size-weighted mean. The RMSE total weights each group's sum of
    squared errors, n_j * eps_j**2, by n_j / n before taking the root.
    """
    sizes = np.asarray(group_sizes, dtype=float)
    r2 = np.asarray(group_r2, dtype=float)
    eps = np.asarray(group_eps, dtype=float)
    if sizes.size == 0:
        raise ValueError("weighted_totals needs at least one group")
    if not (sizes.shape == r2.shape == eps.shape):
        raise ValueError("group_sizes, group_r2 and group_eps differ in length")
    if np.any(sizes < 1):
        raise ValueError("group sizes must be >= 1")
    w = sizes / sizes.sum()
    total_r2 = float(np.sum(w * r2))
    total_eps = float(np.sqrt(np.sum(w * sizes * eps ** 2)))
    if np.all(r2 == r2[0]):
        total_r2 = float(r2[0])
    return total_r2, total_eps


def f_sf(f, df1, df2) -> float:
    """Upper tail of the F(df1, df2) distribution."""
    if f <= 0:
        return 1.0
    x = df2 / (df2 + df1 * f)
    return float(special.betainc(df2 / 2.0, df1 / 2.0, x))


def chi2_sf(x, df) -> float:
    if x <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def anova_from_sums(ss_groups: float, df_groups: int, ss_error: float,
                    df_error: int) -> AnovaTable:
    if df_groups < 1 or df_error < 1:
        raise DegenerateError(
            f"degenerate degrees of freedom ({df_groups}, {df_error})")
    ms_g = ss_groups / df_groups
    ms_e = ss_error / df_error
    if not ms_e > 0:
        raise DegenerateError("zero within-group variance; F undefined")
    f = ms_g / ms_e
    table = AnovaTable(ss_groups, ss_error, ss_groups + ss_error, df_groups,
                       df_error, df_groups + df_error, ms_g, ms_e, f,
                       f_sf(f, df_groups, df_error))
    table.check()
    return table


def one_way_anova(groups) -> AnovaTable:
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(len(g) < 1 for g in groups):
        raise DegenerateError("ANOVA needs at least two non-empty groups")
    n = sum(len(g) for g in groups)
    grand = np.concatenate(groups).mean()
    ss_g = float(sum(len(g) * (g.mean() - grand) ** 2 for g in groups))
    ss_e = float(sum(np.sum((g - g.mean()) ** 2) for g in groups))
    return anova_from_sums(ss_g, len(groups) - 1, ss_e, n - len(groups))


def harmonic_mean(values) -> float:
    """n / sum(1/x); NaN when any value is non-positive."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("harmonic mean of an empty sample")
    if np.any(values <= 0):
        return math.nan
    return float(len(values) / np.sum(1.0 / values))


def default_max_lag(n: int) -> int:
    return max(1, min(10, n // 4))


def acf(x, nlags: int) -> np.ndarray:
    """Sample autocorrelations at lags 0..nlags (biased denominators)."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = np.dot(d, d)
    if not denom > 0:
        raise DegenerateError("constant series; autocorrelations undefined")
    n = len(x)
    return np.array([np.dot(d[:n - k], d[k:]) / denom for k in range(nlags + 1)])


def pacf(x, nlags: int) -> np.ndarray:
    """Partial autocorrelations at lags 1..nlags via Durbin-Levinson."""
    r = acf(x, nlags)
    out = np.zeros(nlags)
    phi = np.zeros(0)
    for k in range(1, nlags + 1):
        if phi.size:
            num = r[k] - np.dot(phi, r[k - 1:0:-1])
            den = 1.0 - np.dot(phi, r[1:k])
        else:
            num, den = r[1], 1.0
        a = num / den if den != 0 else 0.0
        phi = np.concatenate([phi - a * phi[::-1], [a]])
        out[k - 1] = a
    return out


def pacf_within_bands(x, max_lag: int | None = None) -> bool:
    """True when every PACF value at lags 1..max_lag lies in +-1.96/sqrt(n)."""
    x = np.asarray(x, dtype=float)
    max_lag = max_lag or default_max_lag(len(x))
    band = 1.96 / math.sqrt(len(x))
    return bool(np.all(np.abs(pacf(x, max_lag)) <= band))


def ljung_box(residuals, max_lag: int | None = None, alpha: float = DEFAULT_ALPHA,
              fitted_params: int = 0) -> TestResult:
    """Ljung-Box portmanteau test; ``rejected`` means autocorrelation found.

    The chi-square degrees of freedom are ``max_lag - fitted_params``, floored
    at 1 so that short groups with many ARMA terms still get a p-value.
    """
    x = np.asarray(residuals, dtype=float)
    n = len(x)
    max_lag = max_lag or default_max_lag(n)
    if not n > max_lag >= 1:
        raise DataError(f"series of length {n} too short for lag {max_lag}")
    r = acf(x, max_lag)[1:]
    q = n * (n + 2) * np.sum(r ** 2 / (n - np.arange(1, max_lag + 1)))
    df = max(max_lag - fitted_params, 1)
    return _result("ljung_box", q, chi2_sf(q, df), alpha)


def adf_lag_order(n: int) -> int:
    return int(math.floor((n - 1) ** (1.0 / 3.0)))


def adf_regression(series, lags: int) -> tuple[float, int]:
    """t-statistic on y_{t-1} in the constant-only ADF regression.

    Returns (statistic, number of observations used).
    """
    y = np.asarray(series, dtype=float)
    dy = np.diff(y)
    nobs = len(dy) - lags
    cols = [np.ones(nobs), y[lags:-1]]
    for j in range(1, lags + 1):
        cols.append(dy[lags - j:len(dy) - j])
    X = np.column_stack(cols)
    target = dy[lags:]
    if nobs <= X.shape[1]:
        raise DataError("too few observations for the ADF regression")
    beta, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateError("singular ADF regression")
    resid = target - X @ beta
    s2 = resid @ resid / (nobs - X.shape[1])
    scale = max(np.mean(target ** 2), np.var(y))
    if not s2 > 1e-24 * max(scale, 1e-300):
        raise DegenerateError("ADF regression has zero residual variance")
    cov = s2 * np.linalg.inv(X.T @ X)
    return float(beta[1] / math.sqrt(cov[1, 1])), nobs


def unit_root_test(series, alpha: float = DEFAULT_ALPHA,
                   lags: int | None = None) -> TestResult:
    """Augmented Dickey-Fuller with constant; ``rejected`` means stationary.

    Lag order defaults to floor((n-1)^(1/3)); the p-value uses MacKinnon's
    response-surface approximation.
    """
    y = np.asarray(series, dtype=float)
    if len(y) < 8:
        raise DataError(f"unit-root test needs >= 8 points, got {len(y)}")
    lags = adf_lag_order(len(y)) if lags is None else lags
    stat, _ = adf_regression(y, lags)
    return _result("adf", stat, mackinnonp(stat, regression="c", N=1), alpha)


def jarque_bera_statistic(sample) -> float:
    x = np.asarray(sample, dtype=float)
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    if not m2 > 0:
        raise DegenerateError("zero-variance sample")
    skew = np.mean(d ** 3) / m2 ** 1.5
    kurt = np.mean(d ** 4) / m2 ** 2
    return float(len(x) / 6.0 * (skew ** 2 + (kurt - 3.0) ** 2 / 4.0))


def normality_test(sample, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Jarque-Bera test; ``rejected`` means the sample looks non-normal."""
    x = np.asarray(sample, dtype=float)
    if len(x) < 8:
        raise DataError(f"normality test needs >= 8 points, got {len(x)}")
    jb = jarque_bera_statistic(x)
    return _result("jarque_bera", jb, chi2_sf(jb, 2), alpha)
