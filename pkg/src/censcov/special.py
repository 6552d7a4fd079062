"""Incomplete gamma functions.

Series expansion below ``x < a + 1`` and a modified Lentz continued fraction
above it, following the classic split. Everything is evaluated in log space so
that the Weibull tail integrals stay finite for extreme shapes.
"""

import math

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _log_series(a, x):
    # log of gamma(a, x) * exp(x) * x**(-a), i.e. the lower series sum
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return math.log(total)
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _log_continued_fraction(a, x):
    # log of Gamma(a, x) * exp(x) * x**(-a)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.log(h)
    raise ArithmeticError(
        f"incomplete gamma continued fraction did not converge (a={a}, x={x})"
    )


def gammainc_lower_regularized(a, x):
    """Regularized lower incomplete gamma function ``P(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        return min(1.0, math.exp(prefix + _log_series(a, x)))
    return max(0.0, 1.0 - math.exp(prefix + _log_continued_fraction(a, x)))


def gammainc_upper_regularized(a, x):
    """Regularized upper incomplete gamma function ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        return max(0.0, 1.0 - math.exp(prefix + _log_series(a, x)))
    return min(1.0, math.exp(prefix + _log_continued_fraction(a, x)))


def log_upper_incomplete_gamma(a, x):
    """Natural log of the (non-regularized) upper incomplete gamma ``Gamma(a, x)``.

    Returns ``-inf`` for ``x = inf``.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if math.isinf(x):
        return -math.inf
    if x == 0:
        return math.lgamma(a)
    if x < a + 1.0:
        lower = math.exp(-x + a * math.log(x) - math.lgamma(a) + _log_series(a, x))
        return math.lgamma(a) + math.log1p(-min(lower, 1.0)) if lower < 1.0 else -math.inf
    return -x + a * math.log(x) + _log_continued_fraction(a, x)


def upper_incomplete_gamma(a, x):
    """Non-regularized upper incomplete gamma ``Gamma(a, x)``."""
    return math.exp(log_upper_incomplete_gamma(a, x))
