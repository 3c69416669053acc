"""Chi-square distribution function and quantile.

The cdf is the regularized lower incomplete gamma function P(d/2, x/2),
evaluated with the power series below ``a + 1`` and the Lentz continued
fraction for the upper tail above it.
"""

import math
from functools import lru_cache

from scipy.optimize import brentq

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _gamma_p_series(a, x):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a, x):
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
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi_sq_cdf(x, d):
    """P(X <= x) for X ~ chi-square with ``d`` degrees of freedom."""
    if d <= 0 or int(d) != d:
        raise ValueError(f"degrees of freedom must be a positive integer, got {d!r}")
    if not x >= 0.0:
        raise ValueError(f"x must be non-negative, got {x!r}")
    if math.isinf(x):
        return 1.0
    if x == 0.0:
        return 0.0
    a = 0.5 * d
    half = 0.5 * x
    if half < a + 1.0:
        return min(1.0, _gamma_p_series(a, half))
    return max(0.0, 1.0 - _gamma_q_contfrac(a, half))


def chi_sq_sf(x, d):
    """Upper tail P(X > x); accurate where the cdf rounds to one."""
    if d <= 0 or int(d) != d:
        raise ValueError(f"degrees of freedom must be a positive integer, got {d!r}")
    if not x >= 0.0:
        raise ValueError(f"x must be non-negative, got {x!r}")
    if math.isinf(x):
        return 0.0
    if x == 0.0:
        return 1.0
    a = 0.5 * d
    half = 0.5 * x
    if half < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, half))
    return min(1.0, _gamma_q_contfrac(a, half))


@lru_cache(maxsize=512)
def chi_sq_quantile(p, d):
    """Inverse of :func:`chi_sq_cdf` in ``x`` for ``0 < p < 1``."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    if d <= 0 or int(d) != d:
        raise ValueError(f"degrees of freedom must be a positive integer, got {d!r}")
    hi = max(1.0, 2.0 * d)
    while chi_sq_cdf(hi, d) < p:
        hi *= 2.0
    return brentq(lambda x: chi_sq_cdf(x, d) - p, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
