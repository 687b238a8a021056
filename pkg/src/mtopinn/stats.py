"""Welch's unequal-variance t-test with a self-contained Student-t tail.

The two-sided p-value is I_x(df/2, 1/2) with x = df / (df + t^2), the
regularised incomplete beta function evaluated by a continued fraction
(modified Lentz).
"""
from dataclasses import dataclass
import math

_TINY = 1e-300
_EPS = 1e-15


def _betacf(a, b, x, max_iter=10000):
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularised incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t, df):
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t))))


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float
    significant: bool


def _mean_var(xs):
    n = len(xs)
    m = math.fsum(xs) / n
    return m, math.fsum((x - m) ** 2 for x in xs) / (n - 1)


def welch_t_test(xs, ys, alpha=0.05):
    """Two-sided Welch test of equal means."""
    xs, ys = [float(x) for x in xs], [float(y) for y in ys]
    nx, ny = len(xs), len(ys)
    if nx < 2 or ny < 2:
        raise ValueError("welch_t_test needs at least two samples per group")
    mx, vx = _mean_var(xs)
    my, vy = _mean_var(ys)
    sx, sy = vx / nx, vy / ny
    se2 = sx + sy
    if se2 == 0.0:
        # both groups constant
        if mx == my:
            return WelchResult(0.0, float(nx + ny - 2), 1.0, False)
        return WelchResult(math.copysign(math.inf, mx - my), float(nx + ny - 2), 0.0, True)
    t = (mx - my) / math.sqrt(se2)
    df = se2 * se2 / (sx * sx / (nx - 1) + sy * sy / (ny - 1))
    p = t_two_sided_p(t, df)
    return WelchResult(t, df, p, p < alpha)
