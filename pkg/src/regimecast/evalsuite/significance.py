"""Paired t-test on daily squared errors with Cohen's d.

The two-sided p-value uses the identity P(|T| > t) = I_x(nu/2, 1/2) with
x = nu / (nu + t^2), where I is the regularized incomplete beta function,
evaluated here by Lentz's continued fraction (no stats library).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MAX_ITER = 300
_CF_EPS = 1e-15
_TINY = 1e-300


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
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized I_x(a, b), accurate to ~1e-10."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                     + a * math.log(x) + b * math.log(1.0 - x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: float) -> float:
    """P(|T| >= t) for Student's t with `dof` degrees of freedom."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    x = dof / (dof + t * t)
    return incomplete_beta(dof / 2.0, 0.5, x)


@dataclass
class SignificanceResult:
    comparison: str
    t_stat: float
    p_value: float
    cohens_d: float
    n: int
    degenerate: bool = False


def significance(errors_a, errors_b, comparison: str = "A vs B",
                 min_n: int = 30) -> SignificanceResult:
    """Paired t-test on the difference of daily squared errors."""
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("significance expects equal-length 1-d samples")
    n = a.shape[0]
    if n < min_n:
        raise ValueError(f"need at least {min_n} paired days, got {n}")
    diff = a - b
    mean = float(diff.mean())
    std = float(diff.std(ddof=1))
    if std <= 1e-12 * max(1.0, abs(mean)):
        if mean == 0.0:
            return SignificanceResult(comparison, 0.0, 1.0, 0.0, n)
        # constant non-zero shift: infinite t, flagged degenerate
        t = math.inf if mean > 0 else -math.inf
        return SignificanceResult(comparison, t, 0.0, math.copysign(math.inf, mean),
                                  n, degenerate=True)
    t = mean / (std / math.sqrt(n))
    d = mean / std
    p = student_t_two_sided_p(abs(t), n - 1)
    return SignificanceResult(comparison, float(t), float(p), float(d), n)


def daily_squared_errors(pred_norm: np.ndarray, target_norm: np.ndarray,
                         valid: np.ndarray) -> np.ndarray:
    """Mean squared (normalized) error per day over valid stocks."""
    sq = (pred_norm - target_norm) ** 2
    masked = np.where(valid, sq, 0.0)
    counts = valid.sum(axis=1)
    out = np.full(sq.shape[0], np.nan)
    has = counts > 0
    out[has] = masked.sum(axis=1)[has] / counts[has]
    return out
