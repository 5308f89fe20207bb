"""CIR dynamics: Milstein stepping, group calibration, pricing and a
martingale-estimating-function baseline.

Rates are in whatever unit the data uses (percent p.a. for the pipeline);
`k` is per year and `delta` is the step in years.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import DataError, DegenerateError, NumericalError

log = logging.getLogger(__name__)

K_LOWER = 1e-4
K_UPPER = 50.0
K_GRID_POINTS = 200
K_TOL = 1e-6
MARTINGALE_MIN_WINDOW = 14
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CirParams:
    k: float
    theta: float
    sigma: float
    lambda_risk: float = 0.0

    def __post_init__(self):
        for name in ("k", "theta", "sigma", "lambda_risk"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not (self.k > 0 and self.theta > 0 and self.sigma >= 0):
            raise ValueError("CIR parameters need k > 0, theta > 0, sigma >= 0")

    @property
    def feller(self) -> bool:
        return 2.0 * self.k * self.theta >= self.sigma ** 2

    @property
    def kappa(self) -> float:
        """Risk-neutral mean-reversion speed k + lambda."""
        return self.k + self.lambda_risk

    @property
    def gamma(self) -> float:
        return math.sqrt(self.kappa ** 2 + 2.0 * self.sigma ** 2)


def feller_check(params: CirParams) -> bool:
    return params.feller


# ---------------------------------------------------------------- stepping


def milstein_step(r, params: CirParams, delta: float, z):
    """One Milstein step with full truncation at zero.

    Works elementwise, so `r` and `z` may be arrays.
    """
    return _step(r, params.k, params.theta, params.sigma, delta, z)


def _step(r, k, theta, sigma, delta, z):
    # k may be an array (vectorised search); everything broadcasts
    rp = np.maximum(r, 0.0)
    dw = math.sqrt(delta) * z
    out = (rp + k * (theta - rp) * delta + sigma * np.sqrt(rp) * dw
           + 0.25 * sigma * sigma * (dw * dw - delta))
    out = np.maximum(out, 0.0)
    return out if np.ndim(out) else float(out)


def _check_shocks(group, shocks):
    group = np.asarray(group, dtype=float)
    shocks = np.asarray(shocks, dtype=float)
    if group.ndim != 1 or group.shape != shocks.shape:
        raise DataError(
            f"shock length {shocks.size} does not match group length {group.size}")
    if len(group) < 2:
        raise DataError("a group needs at least 2 observations")
    if not np.all(np.isfinite(shocks)):
        raise DataError("shocks contain non-finite values")
    return group, shocks


def simulate_fitted(group, params: CirParams, shocks, delta: float) -> np.ndarray:
    """Deterministic CIR trajectory started at the first observation.

    Shock h drives the step from h-1 to h, so shocks[0] is never used.
    """
    group, shocks = _check_shocks(group, shocks)
    out = np.empty(len(group))
    out[0] = group[0]
    for h in range(1, len(group)):
        out[h] = _step(out[h - 1], params.k, params.theta, params.sigma,
                       delta, shocks[h])
    return out


def _paths(group, shocks, k, theta, sigma, delta) -> np.ndarray:
    """Simulated paths for every k at once; shape (len(k), len(group))."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    out = np.empty((k.size, len(group)))
    out[:, 0] = group[0]
    for h in range(1, len(group)):
        out[:, h] = _step(out[:, h - 1], k, theta, sigma, delta, shocks[h])
    return out


def s_objective(k, group, shocks, theta: float, sigma: float,
                delta: float) -> np.ndarray:
    """S(k): sample std (ddof=1) of simulated path minus observations.

    `k` may be a scalar or an array; the result has k's shape.
    """
    group, shocks = _check_shocks(group, shocks)
    k_arr = np.asarray(k, dtype=float)
    u = _paths(group, shocks, k_arr.ravel(), theta, sigma, delta) - group
    s = u.std(axis=1, ddof=1)
    return s.reshape(k_arr.shape) if k_arr.ndim else float(s[0])


# ---------------------------------------------------------------- calibration


@dataclass(frozen=True)
class GroupCalibration:
    params: CirParams
    fitted: np.ndarray
    r2_cir: float
    eps: float
    s_curve: tuple = field(default=(), repr=False)  # ((k, S(k)), ...)
    flags: tuple = ()


def _golden(f, a, b, tol):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:  # ties move left, toward smaller k
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def minimize_k(objective, bounds=(K_LOWER, K_UPPER),
               grid_points: int = K_GRID_POINTS, tol: float = K_TOL):
    """Minimise a scalar objective of k on a bounded interval.

    A geometric grid locates every local minimum; each is refined by golden
    section inside its neighbouring grid cells. Ties go to the smaller k.
    `objective` must accept an array of k values.
    Returns (k_best, f_best, grid, f_grid).
    """
    lo, hi = bounds
    if not 0 < lo < hi:
        raise ValueError(f"invalid k bounds {bounds}")
    grid = np.geomspace(lo, hi, grid_points)
    fg = np.asarray(objective(grid), dtype=float)
    if not np.any(np.isfinite(fg)):
        raise NumericalError("k objective is not finite anywhere on the grid")
    fg_safe = np.where(np.isfinite(fg), fg, np.inf)
    j0 = int(np.argmin(fg_safe))
    best_k, best_f = float(grid[j0]), float(fg_safe[j0])
    f1 = lambda x: float(objective(np.array([x]))[0])
    for j in range(grid_points):
        left = fg_safe[j - 1] if j > 0 else np.inf
        right = fg_safe[j + 1] if j < grid_points - 1 else np.inf
        if not (fg_safe[j] <= left and fg_safe[j] <= right):
            continue
        if left == fg_safe[j] == right:
            continue  # flat stretch, nothing to refine
        a = grid[max(j - 1, 0)]
        b = grid[min(j + 1, grid_points - 1)]
        k, f = _golden(f1, a, b, tol)
        if f < best_f or (f == best_f and k < best_k):
            best_k, best_f = float(k), float(f)
    return best_k, best_f, grid, fg


def calibrate_group(group, shocks, delta: float,
                    k_bounds=(K_LOWER, K_UPPER)) -> GroupCalibration:
    """Calibrate (k, theta, sigma) for one positive group.

    sigma is the sample standard deviation and theta the mean of the group;
    k minimises S(k) for paths driven by `shocks`.
    """
    group, shocks = _check_shocks(group, shocks)
    if np.any(group <= 0):
        raise DataError("calibration needs strictly positive (shifted) rates")
    theta = float(group.mean())
    sigma = float(group.std(ddof=1))
    flags = []
    if sigma == 0:
        flags.append("zero_variance")
    k, _, grid, fg = minimize_k(
        lambda kk: s_objective(kk, group, shocks, theta, sigma, delta), k_bounds)
    params = CirParams(k, theta, sigma)
    fitted = simulate_fitted(group, params, shocks, delta)
    try:
        r2 = stats.r_squared(group, fitted)
    except DegenerateError:
        r2 = math.nan
        flags.append("r2_undefined")
    if not params.feller:
        flags.append("feller_violated")
    curve = tuple((float(a), float(b)) for a, b in zip(grid, fg))
    return GroupCalibration(params, fitted, r2, stats.rmse(group, fitted),
                            curve, tuple(flags))


def forecast_step(r: float, params: CirParams, delta: float) -> float:
    """Zero-shock one-step prediction (drift plus the Milstein -sigma^2 delta/4)."""
    return _step(r, params.k, params.theta, params.sigma, delta, 0.0)


# ---------------------------------------------------------------- pricing


def _bond_ab(params: CirParams, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    kap, g, s2 = params.kappa, params.gamma, params.sigma ** 2
    if not g > 0:
        raise ValueError("k + lambda and sigma cannot both vanish")
    e = np.exp(-g * tau)
    denom = (g + kap) * (1.0 - e) + 2.0 * g * e
    b = 2.0 * (1.0 - e) / denom
    # ln A = (2 k theta / s2) [ln(2g/denom) + (kap - g) tau / 2], rewritten
    # so that the s2 -> 0 limit is exact: 2g/denom = 1/(1 - s2 u).
    u = (1.0 - e) / (g * (g + kap))
    x = s2 * u
    small = x < 1e-8
    ratio = np.where(small, 1.0 + 0.5 * x,
                     -np.log1p(-np.where(small, 0.5, x)) / np.where(small, 1.0, x))
    ln_a = 2.0 * params.k * params.theta * (u * ratio - tau / (g + kap))
    return ln_a, b


def bond_price(params: CirParams, tau, r):
    """Zero-coupon price with unit nominal, P = A(tau) exp(-B(tau) r)."""
    if np.any(np.asarray(r) < 0):
        raise ValueError("r must be non-negative")
    ln_a, b = _bond_ab(params, tau)
    p = np.exp(ln_a - b * np.asarray(r, dtype=float))
    return p if np.ndim(p) else float(p)


def yield_curve(params: CirParams, tau, r):
    """Continuously compounded yield (B r - ln A) / tau for tau > 0."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr <= 0):
        raise ValueError("tau must be positive")
    ln_a, b = _bond_ab(params, tau_arr)
    y = (b * np.asarray(r, dtype=float) - ln_a) / tau_arr
    return y if np.ndim(y) else float(y)


def yield_asymptote(params: CirParams) -> float:
    return 2.0 * params.k * params.theta / (params.gamma + params.kappa)


def yield_thresholds(params: CirParams) -> tuple[float, float]:
    """(normal threshold or nan, inverse threshold) for the short rate."""
    kap, g = params.kappa, params.gamma
    inv = params.k * params.theta / kap if kap > 0 else math.inf
    denom = g - 2.0 * kap
    normal = params.k * params.theta / denom if denom > 0 else math.nan
    return normal, inv


def classify_yield(params: CirParams, r: float) -> str:
    """'normal', 'humped' or 'inverse' term-structure shape at short rate r."""
    normal, inv = yield_thresholds(params)
    if r >= inv:
        return "inverse"
    if math.isnan(normal):
        log.debug("gamma <= 2(k + lambda): normal shape unavailable")
        return "humped"
    return "normal" if r <= normal else "humped"


# ---------------------------------------------------------------- baseline


def martingale_estimate(window, delta: float) -> CirParams:
    """Closed-form martingale estimating-function estimates for CIR.

    The drift equations, weighted by 1/r_{i-1}, are linear in
    a = exp(-k delta) and b = theta (1 - a); sigma^2 then solves the
    conditional-variance equation with the same weights.
    """
    x = np.asarray(window, dtype=float)
    if len(x) < MARTINGALE_MIN_WINDOW:
        raise DataError(
            f"martingale window needs >= {MARTINGALE_MIN_WINDOW} points, got {len(x)}")
    if np.any(x <= 0):
        raise DataError("martingale estimation needs strictly positive rates")
    x0, x1 = x[:-1], x[1:]
    w = 1.0 / x0
    sw, sx, sy = w.sum(), (w * x0).sum(), (w * x1).sum()
    sxx, sxy = (w * x0 * x0).sum(), (w * x0 * x1).sum()
    det = sw * sxx - sx * sx
    if not det > 1e-14 * sw * sxx:
        raise DegenerateError("constant window; autoregression undefined")
    a = (sw * sxy - sx * sy) / det
    b = (sy - a * sx) / sw
    if not 0.0 < a < 1.0:
        raise DegenerateError(
            f"autoregression {a:.6g} outside (0, 1): no mean reversion")
    k = -math.log(a) / delta
    theta = b / (1.0 - a)
    if not theta > 0:
        raise DegenerateError(f"non-positive long-run mean {theta:.6g}")
    psi = ((theta / 2 - x0) * a * a - (theta - x0) * a + theta / 2) / k
    resid = x1 - a * x0 - b
    sigma2 = float(np.sum(w * resid ** 2) / np.sum(w * psi))
    return CirParams(k, theta, math.sqrt(max(sigma2, 0.0)))
