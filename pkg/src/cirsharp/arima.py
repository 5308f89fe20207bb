"""ARIMA(p, i, q) fitting and the per-group candidate grid.

Fitting works on the i-times differenced series with an intercept. Starting
values come from a conditional-sum-of-squares fit; the exact Gaussian
likelihood (Kalman-filter innovations, variance concentrated out) is then
maximised with Nelder-Mead. AR and MA coefficients are optimised through a
partial-autocorrelation reparameterisation, so every fit is stationary and
invertible by construction.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from . import johnson, stats
from .errors import CirSharpError, ConvergenceError, DataError, DegenerateError

log = logging.getLogger(__name__)

P_RANGE = (1, 2, 3)
I_RANGE = (0, 1, 2)
Q_RANGE = (1, 2, 3)
R2_ARIMA_MIN = 0.5
MIN_GROUP_LEN = 8

NM_MAXITER = 500
NM_TOL = 1e-8


@dataclass(frozen=True, order=True)
class ArimaSpec:
    p: int
    i: int
    q: int

    def __post_init__(self):
        if self.p not in P_RANGE or self.i not in I_RANGE or self.q not in Q_RANGE:
            raise ValueError(f"ARIMA{self} outside the searched grid")

    def __str__(self):
        return f"({self.p},{self.i},{self.q})"

    @property
    def order_sum(self) -> int:
        return self.p + self.i + self.q

    @property
    def n_params(self) -> int:
        """Coefficients + intercept + innovation variance."""
        return self.p + self.q + 2

    @classmethod
    def parse(cls, text: str) -> "ArimaSpec":
        p, i, q = (int(t) for t in text.strip("() ").split(","))
        return cls(p, i, q)


GRID = tuple(ArimaSpec(p, i, q) for p, i, q in itertools.product(P_RANGE, I_RANGE, Q_RANGE))


@dataclass(frozen=True)
class ArimaFit:
    spec: ArimaSpec
    ar_coeffs: tuple
    ma_coeffs: tuple
    intercept: float
    sigma2: float
    residuals: np.ndarray
    loglik: float
    bic: float
    r2_arima: float
    nobs: int
    converged: bool = True
    errors: np.ndarray = field(default=None, repr=False)  # y - one-step prediction


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _pacf_to_coeffs(u):
    """Unconstrained values -> coefficients of a stationary AR polynomial."""
    k = len(u)
    phi = np.zeros(k)
    tmp = np.zeros(k)
    for j in range(k):
        a = u[j] / math.sqrt(1.0 + u[j] * u[j])
        for i in range(j):
            tmp[i] = phi[i] - a * phi[j - 1 - i]
        for i in range(j):
            phi[i] = tmp[i]
        phi[j] = a
    return phi


@njit(cache=True)
def _unpack(x, p, q):
    phi = _pacf_to_coeffs(x[:p])
    theta = -_pacf_to_coeffs(x[p:p + q])
    return phi, theta, x[p + q]


@njit(cache=True)
def _conditional_residuals(w, phi, theta, mu, start):
    n = len(w)
    p, q = len(phi), len(theta)
    a = np.zeros(n)
    for t in range(start, n):
        e = w[t] - mu
        for i in range(p):
            e -= phi[i] * (w[t - 1 - i] - mu)
        for j in range(q):
            if t - 1 - j >= 0:
                e -= theta[j] * a[t - 1 - j]
        a[t] = e
    return a


@njit(cache=True)
def _css(x, w, p, q):
    phi, theta, mu = _unpack(x, p, q)
    start = max(p, q)
    a = _conditional_residuals(w, phi, theta, mu, start)
    s = 0.0
    for t in range(start, len(w)):
        s += a[t] * a[t]
    return s / (len(w) - start)


@njit(cache=True)
def _state_space(phi, theta):
    p, q = len(phi), len(theta)
    r = max(p, q + 1)
    T = np.zeros((r, r))
    for i in range(p):
        T[i, 0] = phi[i]
    for i in range(r - 1):
        T[i, i + 1] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    for j in range(q):
        R[j + 1] = theta[j]
    return T, R


@njit(cache=True)
def _solve(A, b):
    """Gaussian elimination with partial pivoting; ok=False when singular."""
    n = len(b)
    A = A.copy()
    x = b.copy()
    for c in range(n):
        piv = c
        for r in range(c + 1, n):
            if abs(A[r, c]) > abs(A[piv, c]):
                piv = r
        if abs(A[piv, c]) < 1e-13:
            return x, False
        if piv != c:
            for j in range(n):
                A[c, j], A[piv, j] = A[piv, j], A[c, j]
            x[c], x[piv] = x[piv], x[c]
        for r in range(c + 1, n):
            f = A[r, c] / A[c, c]
            if f != 0.0:
                for j in range(c, n):
                    A[r, j] -= f * A[c, j]
                x[r] -= f * x[c]
    for c in range(n - 1, -1, -1):
        s = x[c]
        for j in range(c + 1, n):
            s -= A[c, j] * x[j]
        x[c] = s / A[c, c]
    return x, True


@njit(cache=True)
def _stationary_cov(T, R):
    r = T.shape[0]
    rr = r * r
    A = np.eye(rr)
    for i in range(r):
        for j in range(r):
            for k in range(r):
                for l in range(r):
                    A[i * r + k, j * r + l] -= T[i, j] * T[k, l]
    b = np.zeros(rr)
    for i in range(r):
        for k in range(r):
            b[i * r + k] = R[i] * R[k]
    vec, ok = _solve(A, b)
    P = np.zeros((r, r))
    if not ok:
        P[0, 0] = np.nan
        return P
    for i in range(r):
        for k in range(r):
            P[i, k] = vec[i * r + k]
    return P


@njit(cache=True)
def _kalman(phi, theta, mu, w):
    """Innovations v_t and their variances F_t (in units of sigma^2)."""
    T, R = _state_space(phi, theta)
    r = T.shape[0]
    Q = np.outer(R, R)
    P = _stationary_cov(T, R)
    a = np.zeros(r)
    n = len(w)
    v = np.zeros(n)
    F = np.full(n, np.nan)
    for t in range(n):
        v[t] = w[t] - mu - a[0]
        F[t] = P[0, 0]
        if not F[t] > 0.0:
            F[t] = np.nan
            return v, F
        K = P[:, 0] / F[t]
        a_u = a + K * v[t]
        P_u = P - np.outer(K, P[0, :])
        a = T @ a_u
        P = T @ P_u @ T.T + Q
    return v, F


@njit(cache=True)
def _exact_loglik(phi, theta, mu, w):
    """Concentrated exact Gaussian log-likelihood and the variance estimate."""
    v, F = _kalman(phi, theta, mu, w)
    n = len(w)
    ssq = 0.0
    sumlog = 0.0
    for t in range(n):
        if not F[t] > 0.0:
            return -np.inf, np.nan
        ssq += v[t] * v[t] / F[t]
        sumlog += math.log(F[t])
    sigma2 = ssq / n
    if not sigma2 > 0.0:
        return -np.inf, np.nan
    ll = -0.5 * n * (math.log(2.0 * math.pi) + math.log(sigma2) + 1.0) - 0.5 * sumlog
    return ll, sigma2


@njit(cache=True)
def _neg_loglik(x, w, p, q):
    phi, theta, mu = _unpack(x, p, q)
    ll, _ = _exact_loglik(phi, theta, mu, w)
    if not np.isfinite(ll):
        return 1e300
    return -ll


@njit(cache=True)
def _objective(x, w, p, q, exact):
    return _neg_loglik(x, w, p, q) if exact else _css(x, w, p, q)


@njit(cache=True)
def _nelder_mead(x0, w, p, q, exact, maxiter, xatol, fatol):
    """Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5).

    Initial simplex perturbs each coordinate by 5% (0.00025 when zero).
    Returns (x, f, converged).
    """
    n = len(x0)
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    sim[0] = x0
    for k in range(n):
        y = x0.copy()
        y[k] = y[k] * 1.05 if y[k] != 0.0 else 0.00025
        sim[k + 1] = y
    for k in range(n + 1):
        fs[k] = _objective(sim[k], w, p, q, exact)
    converged = False
    for _ in range(maxiter):
        order = np.argsort(fs)
        sim = sim[order]
        fs = fs[order]
        xspread = 0.0
        fspread = 0.0
        for k in range(1, n + 1):
            fspread = max(fspread, abs(fs[k] - fs[0]))
            for j in range(n):
                xspread = max(xspread, abs(sim[k, j] - sim[0, j]))
        if xspread <= xatol and fspread <= fatol:
            converged = True
            break
        xbar = np.zeros(n)
        for k in range(n):
            xbar += sim[k]
        xbar /= n
        xr = 2.0 * xbar - sim[n]
        fr = _objective(xr, w, p, q, exact)
        shrink = False
        if fr < fs[0]:
            xe = 3.0 * xbar - 2.0 * sim[n]
            fe = _objective(xe, w, p, q, exact)
            if fe < fr:
                sim[n], fs[n] = xe, fe
            else:
                sim[n], fs[n] = xr, fr
        elif fr < fs[n - 1]:
            sim[n], fs[n] = xr, fr
        elif fr < fs[n]:
            xc = 1.5 * xbar - 0.5 * sim[n]
            fc = _objective(xc, w, p, q, exact)
            if fc <= fr:
                sim[n], fs[n] = xc, fc
            else:
                shrink = True
        else:
            xcc = 0.5 * xbar + 0.5 * sim[n]
            fcc = _objective(xcc, w, p, q, exact)
            if fcc < fs[n]:
                sim[n], fs[n] = xcc, fcc
            else:
                shrink = True
        if shrink:
            for k in range(1, n + 1):
                sim[k] = sim[0] + 0.5 * (sim[k] - sim[0])
                fs[k] = _objective(sim[k], w, p, q, exact)
    best = np.argmin(fs)
    return sim[best].copy(), fs[best], converged


# ---------------------------------------------------------------- fitting


def difference(y, i: int) -> np.ndarray:
    return np.diff(np.asarray(y, dtype=float), n=i) if i else np.asarray(y, dtype=float)


def exact_loglik(w, ar, ma, intercept) -> tuple[float, float]:
    """Exact Gaussian log-likelihood of an ARMA model for the series w.

    Returns (loglik, sigma2) with the innovation variance at its maximiser.
    """
    return _exact_loglik(np.asarray(ar, dtype=float), np.asarray(ma, dtype=float),
                         float(intercept), np.asarray(w, dtype=float))


def bic_of(fit: ArimaFit, n: Optional[int] = None) -> float:
    n = fit.nobs if n is None else n
    return fit.spec.n_params * math.log(n) - 2.0 * fit.loglik


def _ar_roots_ok(phi) -> bool:
    if not len(phi):
        return True
    roots = np.roots(np.r_[-np.asarray(phi)[::-1], 1.0])
    return bool(np.all(np.abs(roots) > 1.0 + 1e-10))


def fit_arima(series, spec: ArimaSpec) -> ArimaFit:
    """Fit ARIMA(p, i, q) with intercept by exact maximum likelihood.

    Residuals are the exact one-step innovations of the differenced series
    from the Kalman filter, each divided by its own standard deviation, so
    they are i.i.d. standard normal under the model. The first
    max(p, q) + i positions are pre-sample and set to zero, so the residuals
    line up one-to-one with `series`.
    """
    y = np.asarray(series, dtype=float)
    p, i, q = spec.p, spec.i, spec.q
    if len(y) < p + q + i + 3:
        raise DataError(f"series of length {len(y)} too short for ARIMA{spec}")
    w = difference(y, i)
    loc, scale = w.mean(), w.std()
    if not scale > 1e-12 * max(np.abs(w).max(), 1e-300):
        raise DegenerateError(f"zero-variance series for ARIMA{spec}")
    ws = (w - loc) / scale

    x0 = np.zeros(p + q + 1)
    x_css, f_css, _ = _nelder_mead(x0, ws, p, q, False, NM_MAXITER, NM_TOL, NM_TOL)
    start = x_css if np.isfinite(f_css) else x0
    if _neg_loglik(start, ws, p, q) >= 1e299:
        start = x0  # CSS drifted onto the unit-root boundary
    x_ml, f_ml, converged = _nelder_mead(start, ws, p, q, True, NM_MAXITER,
                                         NM_TOL, NM_TOL)
    if not np.isfinite(f_ml) or f_ml >= 1e299:
        raise ConvergenceError(f"likelihood not finite for ARIMA{spec}")
    phi, theta, mu_s = _unpack(x_ml, p, q)
    if not _ar_roots_ok(phi):
        raise ConvergenceError(f"AR root inside the unit circle for ARIMA{spec}")

    ll_s, sigma2_s = _exact_loglik(phi, theta, mu_s, ws)
    nobs = len(w)
    loglik = float(ll_s - nobs * math.log(scale))
    sigma2 = float(sigma2_s * scale ** 2)
    mu = float(loc + scale * mu_s)

    v, F = _kalman(phi, theta, mu_s, ws)
    m0 = max(p, q)
    v[:m0] = 0.0  # pre-sample positions carry no shock
    raw = np.zeros(len(y))
    raw[i:] = v * scale  # one-step prediction errors, original units
    r2 = stats.r_squared(y, y - raw)
    std = np.zeros(len(y))
    std[i + m0:] = v[m0:] / np.sqrt(F[m0:] * sigma2_s)
    fit = ArimaFit(spec, tuple(float(c) for c in phi), tuple(float(c) for c in theta),
                   mu, sigma2, std, loglik, 0.0, r2, nobs, bool(converged), raw)
    return replace(fit, bic=bic_of(fit))


def reconstruct(fit: ArimaFit, y) -> np.ndarray:
    """Rebuild the differenced series from the stored prediction errors.

    The first max(p, q) differenced values are taken from the data; every
    later value is the filter's one-step prediction plus the stored error.
    """
    spec = fit.spec
    w = difference(y, spec.i)
    e = fit.errors[spec.i:]
    m0 = max(spec.p, spec.q)
    T, R = _state_space(np.asarray(fit.ar_coeffs), np.asarray(fit.ma_coeffs))
    P = _stationary_cov(T, R)
    Q = np.outer(R, R)
    a = np.zeros(T.shape[0])
    out = np.empty(len(w))
    for t in range(len(w)):
        pred = fit.intercept + a[0]
        out[t] = w[t] if t < m0 else pred + e[t]
        K = P[:, 0] / P[0, 0]
        a_u = a + K * (out[t] - pred)
        P_u = P - np.outer(K, P[0, :])
        a = T @ a_u
        P = T @ P_u @ T.T + Q
    return out


# ---------------------------------------------------------------- candidates


@dataclass(frozen=True)
class DiagnosticsConfig:
    alpha: float = stats.DEFAULT_ALPHA
    relax_pac: bool = False
    r2_min: float = R2_ARIMA_MIN
    threads: int = 1


@dataclass(frozen=True)
class Diagnostics:
    no_autocorrelation: bool = False
    pac_ok: bool = False
    stationary: bool = False
    normal: bool = False
    r2_ok: bool = False
    ljung_box_p: float = math.nan
    adf_p: float = math.nan
    jarque_bera_p: float = math.nan
    johnson_family: str = ""
    clamped: int = 0
    note: str = ""

    @property
    def conditions_1_to_4(self) -> bool:
        return (self.no_autocorrelation and self.pac_ok and self.stationary
                and self.normal and self.r2_ok)


@dataclass(frozen=True)
class CandidateEntry:
    fit: ArimaFit
    diagnostics: Diagnostics
    shocks: Optional[np.ndarray]
    satisfies_bic: bool = False

    @property
    def spec(self) -> ArimaSpec:
        return self.fit.spec

    @property
    def suboptimal(self) -> bool:
        return self.diagnostics.conditions_1_to_4 and self.shocks is not None


@dataclass(frozen=True)
class CandidateSet:
    group_index: int
    entries: tuple
    r2_cir: dict = field(default_factory=dict)  # spec -> R^2 of the CIR fit
    r2_cir_min: float = 0.5

    @property
    def suboptimal(self) -> list[CandidateEntry]:
        return [e for e in self.entries if e.suboptimal]

    @property
    def i_ac(self) -> list[CandidateEntry]:
        return [e for e in self.suboptimal
                if self.r2_cir.get(e.spec, -math.inf) > self.r2_cir_min]

    @property
    def i_acb(self) -> list[CandidateEntry]:
        return [e for e in self.i_ac if e.satisfies_bic]

    def entry(self, spec: ArimaSpec) -> CandidateEntry:
        for e in self.entries:
            if e.spec == spec:
                return e
        raise KeyError(spec)


def residual_diagnostics(fit: ArimaFit, config: DiagnosticsConfig
                         ) -> tuple[Diagnostics, Optional[np.ndarray]]:
    """Check conditions 1-4 on a fit's standardized residuals.

    Returns the diagnostics and the Johnson-normalised residuals (None when
    the normalisation itself failed).
    """
    z = fit.residuals
    alpha = config.alpha
    out = {"r2_ok": fit.r2_arima > config.r2_min}
    shocks = None
    notes = []
    try:
        lb = stats.ljung_box(z, alpha=alpha, fitted_params=fit.spec.p + fit.spec.q)
        out["ljung_box_p"] = lb.p_value
        out["no_autocorrelation"] = not lb.rejected
        out["pac_ok"] = config.relax_pac or stats.pacf_within_bands(z)
    except CirSharpError as exc:
        notes.append(f"autocorrelation: {exc}")
    try:
        adf = stats.unit_root_test(z, alpha=alpha)
        out["adf_p"] = adf.p_value
        out["stationary"] = adf.rejected
    except CirSharpError as exc:
        notes.append(f"unit root: {exc}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", johnson.JohnsonFitWarning)
            jfit = johnson.fit_johnson(z)
        shocks, moved = johnson.transform_clamped(jfit, z)
        jb = stats.normality_test(shocks, alpha=alpha)
        out.update(jarque_bera_p=jb.p_value, normal=not jb.rejected,
                   johnson_family=jfit.family, clamped=moved)
    except (CirSharpError, ValueError, FloatingPointError) as exc:
        shocks = None
        notes.append(f"normality: {exc}")
    return Diagnostics(note="; ".join(notes), **out), shocks


def _try_fit(y, spec):
    try:
        return fit_arima(y, spec)
    except CirSharpError as exc:
        log.debug("ARIMA%s skipped: %s", spec, exc)
        return None


def enumerate_candidates(group, config: DiagnosticsConfig = DiagnosticsConfig(),
                         group_index: int = 0) -> CandidateSet:
    """Fit the full (p, i, q) grid on one group and run the diagnostics.

    A spec satisfies the BIC condition when it has the lowest BIC among the
    converged fits sharing its differencing order (the p x q BIC matrix).
    """
    y = np.asarray(group, dtype=float)
    if len(y) < MIN_GROUP_LEN:
        raise DataError(f"group of length {len(y)} below {MIN_GROUP_LEN}")
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            fits = list(pool.map(lambda s: _try_fit(y, s), GRID))
    else:
        fits = [_try_fit(y, s) for s in GRID]
    fits = [f for f in fits if f is not None]
    best_bic = {}
    for f in fits:
        best_bic[f.spec.i] = min(best_bic.get(f.spec.i, math.inf), f.bic)
    entries = []
    for f in fits:
        diag, shocks = residual_diagnostics(f, config)
        entries.append(CandidateEntry(f, diag, shocks, f.bic == best_bic[f.spec.i]))
    cs = CandidateSet(group_index, tuple(entries))
    if not cs.suboptimal:
        log.info("group %d: no ARIMA spec meets conditions 1-4", group_index)
    return cs
