"""Descriptive statistics and Student's t tests.

The t tail probability is computed from the regularized incomplete beta
function, evaluated with a modified Lentz continued fraction.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "mean_sd",
    "betainc",
    "t_sf_two_sided",
    "TTestResult",
    "t_test_one_sample",
    "t_test_paired",
    "REPORT_HEADER",
    "format_report_row",
    "report",
    "ConvergenceError",
]

CF_TOL = 1e-12
CF_MAX_ITER = 300
_TINY = 1e-300


class ConvergenceError(ArithmeticError):
    pass


def mean_sd(sample: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n - 1 denominator)."""
    if len(sample) < 2:
        raise ValueError("mean_sd needs at least two values")
    # statistics works in exact rationals, so a constant sample has sd 0.
    return statistics.mean(sample), statistics.stdev(sample)


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        # odd step
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
        if abs(delta - 1.0) < CF_TOL:
            return h
    raise ConvergenceError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    # The fraction converges fast only below the mean of the distribution;
    # above it, use the reflection I_x(a, b) = 1 - I_{1-x}(b, a).
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be at least 1")
    if t == 0:
        return 1.0
    if math.isinf(t):
        return 0.0
    p = betainc(df / 2.0, 0.5, df / (df + t * t))
    return min(1.0, max(0.0, p))


@dataclass(frozen=True)
class TTestResult:
    sample_n: int
    sample_mean: float
    sample_sd: float
    mu0: float
    t_score: float
    df: int
    p_value: float
    alpha: float
    reject: bool
    degenerate: bool = False


def t_test_one_sample(sample: Sequence[float], mu0: float, alpha: float = 0.01) -> TTestResult:
    n = len(sample)
    if n < 2:
        raise ValueError("t test needs at least two observations")
    mean, sd = mean_sd(sample)
    if sd == 0:
        if mean == mu0:
            return TTestResult(n, mean, 0.0, mu0, 0.0, n - 1, 1.0, alpha, False, degenerate=True)
        t = math.copysign(math.inf, mean - mu0)
        return TTestResult(n, mean, 0.0, mu0, t, n - 1, 0.0, alpha, True, degenerate=True)
    t = (mean - mu0) * math.sqrt(n) / sd
    p = t_sf_two_sided(t, n - 1)
    return TTestResult(n, mean, sd, mu0, t, n - 1, p, alpha, p < alpha)


def t_test_paired(first: Sequence[float], second: Sequence[float], alpha: float = 0.01) -> TTestResult:
    """Paired test of mean(first - second) = 0."""
    if len(first) != len(second):
        raise ValueError("paired samples must have equal length")
    diffs = [a - b for a, b in zip(first, second)]
    return t_test_one_sample(diffs, 0.0, alpha)


REPORT_HEADER = "link_id,dataset_mean,observed_mean,sd,t_score,p_value,alpha,reject"


def format_report_row(link_id: str, dataset_mean: float, r: TTestResult) -> str:
    return (
        f"{link_id},{dataset_mean:g},{r.sample_mean:.7f},{r.sample_sd:.7f},"
        f"{r.t_score:.9f},{r.p_value:.9f},{r.alpha:g},{str(r.reject).lower()}"
    )


def report(rows: Iterable[tuple[str, float, TTestResult]]) -> str:
    lines = [REPORT_HEADER]
    lines.extend(format_report_row(link, mu0, r) for link, mu0, r in rows)
    return "\n".join(lines) + "\n"
