"""Pearson correlation, least-squares calibration, paired t-tests, Bland-Altman.

The Student-t distribution is evaluated through the regularized incomplete
beta function (continued fraction, modified Lentz), so there is no SciPy
dependency at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, ZeroVariance, ZeroVarianceOfDifferences

ALPHA = 0.05
BA_MULTIPLIER = 1.96

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


# --------------------------------------------------------------------------- t distribution

def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t)."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    if t == 0:
        return 0.5
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    return tail if t > 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    if t == 0:
        return 0.5
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def t_critical(df: float, alpha: float = ALPHA, tails: str = "one") -> float:
    """Positive t with upper-tail mass alpha (one) or alpha/2 (two), by bisection."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    target = alpha if tails == "one" else alpha / 2.0
    lo, hi = 0.0, 1.0
    while t_sf(hi, df) > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------- correlation

def _pair(x, y, min_len):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"series lengths differ: {x.shape} vs {y.shape}")
    if len(x) < min_len:
        raise ValueError(f"need at least {min_len} pairs, got {len(x)}")
    return x, y


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p: float
    n: int


def pearson_r(x, y) -> float:
    x, y = _pair(x, y, 3)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("pearson_r needs two nonconstant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pearson_p(r: float, n: int) -> float:
    """Two-tailed p for H0: rho = 0, via t = r sqrt(n-2) / sqrt(1-r^2)."""
    if n < 3:
        raise ValueError("n must be at least 3")
    if abs(r) >= 1.0:
        return 0.0
    t = abs(r) * math.sqrt(n - 2) / math.sqrt(1.0 - r * r)
    return min(1.0, 2.0 * t_sf(t, n - 2))


def pearson(x, y) -> CorrelationResult:
    r = pearson_r(x, y)
    n = len(x)
    return CorrelationResult(r, pearson_p(r, n), n)


# --------------------------------------------------------------------------- calibration

@dataclass(frozen=True)
class CalibrationModel:
    slope: float
    intercept: float
    rmse_before: float = math.nan
    rmse_after: float = math.nan

    def apply(self, x) -> np.ndarray:
        return apply_calibration(self, x)


def fit_calibration(x, y) -> CalibrationModel:
    """OLS of target ``y`` on source ``x``."""
    x, y = _pair(x, y, 2)
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ZeroVariance("calibration source series is constant")
    slope = float(dx @ (y - ym)) / sxx
    intercept = float(ym - slope * xm)
    rmse_before = float(np.sqrt(np.mean((y - x) ** 2)))
    rmse_after = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return CalibrationModel(slope, intercept, rmse_before, rmse_after)


def apply_calibration(model: CalibrationModel, x) -> np.ndarray:
    return model.slope * np.asarray(x, dtype=float) + model.intercept


# --------------------------------------------------------------------------- paired test

@dataclass(frozen=True)
class PairedTestResult:
    t: float
    df: int
    p_one: float  # upper tail, P(T > t)
    p_two: float
    tails: str
    significant: bool
    critical: float
    n: int
    mean_diff: float
    sd_diff: float

    @property
    def p(self) -> float:
        return self.p_one if self.tails == "one" else self.p_two


def paired_t_test(pre, post, tails: str = "one", alpha: float = ALPHA,
                  rtol: float = 1e-12) -> PairedTestResult:
    """Paired t-test on ``d = post - pre``.

    One-tailed significance means ``t`` above the upper critical value.
    Differences no larger than ``rtol`` times the data magnitude are rounding
    noise and count as zero.
    """
    if tails not in ("one", "two"):
        raise ValueError("tails must be 'one' or 'two'")
    pre, post = _pair(pre, post, 2)
    d = post - pre
    n = len(d)
    scale = max(float(np.max(np.abs(pre))), float(np.max(np.abs(post))), 1e-300)
    sd = float(np.std(d, ddof=1))
    if np.max(np.abs(d)) <= rtol * scale or sd <= rtol * scale:
        raise ZeroVarianceOfDifferences("paired differences have zero variance")
    mean = float(d.mean())
    t = mean * math.sqrt(n) / sd
    df = n - 1
    p_one = t_sf(t, df)
    p_two = min(1.0, 2.0 * t_sf(abs(t), df))
    crit = t_critical(df, alpha, tails)
    significant = t > crit if tails == "one" else p_two < alpha
    return PairedTestResult(t, df, p_one, p_two, tails, bool(significant), crit, n, mean, sd)


# --------------------------------------------------------------------------- Bland-Altman

@dataclass(frozen=True)
class BlandAltmanSummary:
    pair_mean: np.ndarray = field(repr=False)
    pair_diff: np.ndarray = field(repr=False)
    mean_diff: float
    sd_diff: float
    multiplier: float
    lower_limit: float
    upper_limit: float
    inside: int

    @property
    def n(self) -> int:
        return len(self.pair_diff)

    @property
    def coverage(self) -> float:
        return self.inside / self.n


def bland_altman(pre, post, multiplier: float = BA_MULTIPLIER) -> BlandAltmanSummary:
    pre, post = _pair(pre, post, 3)
    diff = post - pre
    mean = float(diff.mean())
    sd = float(np.std(diff, ddof=1))
    lo, hi = mean - multiplier * sd, mean + multiplier * sd
    inside = int(np.count_nonzero((diff >= lo) & (diff <= hi)))
    return BlandAltmanSummary((pre + post) / 2.0, diff, mean, sd, multiplier, lo, hi, inside)
