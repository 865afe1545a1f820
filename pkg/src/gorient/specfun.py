"""Special functions for the VMF and Watson densities and their M-steps.

``a_p`` is the Bessel ratio giving the VMF mean resultant length and ``y_p``
is the logarithmic derivative of Kummer's function giving the Watson second
moment. Both are strictly increasing; their inverses are computed with a
bisection-safeguarded Newton iteration.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DegenerateResultant, DegenerateScatter

KAPPA_MAX = 1e6
ROOT_TOL = 1e-12
ROOT_MAXITER = 200
_EPS = float(np.finfo(float).eps)
_KUMMER_ASYMPTOTIC = 1000.0


def bessel_i(order, x):
    """Modified Bessel function of the first kind ``I_order(x)`` for ``x >= 0``.

    Raises ``OverflowError`` when the result does not fit in a float; use
    :func:`log_bessel_i` for large arguments.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("bessel_i requires x >= 0")
    with np.errstate(over="ignore"):
        out = special.iv(order, x)
    if np.any(np.isinf(out)):
        raise OverflowError(f"I_{order}(x) overflows; use log_bessel_i")
    return float(out) if out.ndim == 0 else out


def log_bessel_i(order, x):
    """``log I_order(x)`` computed from the exponentially scaled Bessel function."""
    if isinstance(x, (float, int)):
        if x < 0:
            raise ValueError("log_bessel_i requires x >= 0")
        v = special.ive(order, x)
        return math.log(v) + x if v > 0 else -math.inf
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("log_bessel_i requires x >= 0")
    with np.errstate(divide="ignore"):
        out = np.log(special.ive(order, x)) + x
    return float(out) if out.ndim == 0 else out


def a_p(kappa, p=4):
    """Mean resultant length ``I_{p/2}(kappa) / I_{p/2-1}(kappa)``."""
    kappa = float(kappa)
    if kappa < 0:
        raise ValueError("a_p requires kappa >= 0")
    if kappa < 1e-8:
        return kappa / p
    return float(special.ive(p / 2, kappa) / special.ive(p / 2 - 1, kappa))


def _a_p_derivative(kappa, p, a):
    if kappa < 1e-8:
        return 1.0 / p
    return 1.0 - a * a - (p - 1) / kappa * a


def _solve_increasing(f, fprime, target, x0, lo, hi):
    """Find ``x`` in ``[lo, hi]`` with ``f(x) == target`` for increasing ``f``.

    Newton steps are taken from ``x0`` while they stay inside the current
    bracket; otherwise the bracket is bisected.
    """
    x = min(max(x0, lo), hi)
    for _ in range(ROOT_MAXITER):
        fx = f(x)
        resid = fx - target
        if abs(resid) < ROOT_TOL:
            return x
        if resid > 0:
            hi = x
        else:
            lo = x
        d = fprime(x, fx)
        step = x - resid / d if d > 0 else None
        if step is None or not (lo < step < hi):
            step = 0.5 * (lo + hi)
        if hi - lo <= 4 * _EPS * max(1.0, abs(x)):
            return step
        x = step
    return x


@lru_cache(maxsize=None)
def _a_p_ceiling(p):
    return a_p(KAPPA_MAX, p)


def a_p_inverse(r, p=4):
    """``kappa >= 0`` with ``a_p(kappa, p) == r``; clamped to ``KAPPA_MAX``."""
    r = float(r)
    if r >= 1:
        raise DegenerateResultant(f"mean resultant length {r} >= 1")
    if r < 0:
        raise ValueError("a_p_inverse requires r >= 0")
    if r == 0:
        return 0.0
    if r >= _a_p_ceiling(p):
        return KAPPA_MAX
    x0 = r * (p - r * r) / (1 - r * r)
    hi = min(max(2 * x0, 1.0), KAPPA_MAX)
    while a_p(hi, p) < r and hi < KAPPA_MAX:
        hi = min(2 * hi, KAPPA_MAX)
    return _solve_increasing(
        lambda k: a_p(k, p), lambda k, fk: _a_p_derivative(k, p, fk), r, x0, 0.0, hi
    )


def _log_kummer_series(a, b, z):
    """log M(a, b, z) for ``z >= 0`` and ``a, b > 0`` (all terms positive)."""
    if z == 0:
        return 0.0
    nterms = int(z + 12 * math.sqrt(z) + 60)
    k = np.arange(nterms, dtype=float)
    log_ratio = np.log((a + k) / (b + k)) + math.log(z) - np.log1p(k)
    log_terms = np.concatenate([[0.0], np.cumsum(log_ratio)])
    top = log_terms.max()
    return float(top + math.log(np.exp(log_terms - top).sum()))


def _log_kummer_asymptotic(a, b, z):
    """log M(a, b, z) for large positive ``z`` via the exponential asymptotic series."""
    total, term = 1.0, 1.0
    for k in range(60):
        nxt = term * (b - a + k) * (1 - a + k) / ((k + 1) * z)
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(total):
            break
        term = nxt
        total += term
    return float(special.gammaln(b) - special.gammaln(a) + z + (a - b) * math.log(z) + math.log(total))


def log_kummer_m(a, b, kappa):
    """``log M(a, b, kappa)`` for ``b > 0``.

    Negative arguments use the Kummer transformation
    ``M(a, b, z) = exp(z) M(b - a, b, -z)``.
    """
    if b <= 0:
        raise ValueError("kummer_m requires b > 0")
    kappa = float(kappa)
    if kappa < 0:
        return kappa + log_kummer_m(b - a, b, -kappa)
    if a == b:
        return kappa
    if a <= 0:
        # terminating or sign-changing series: fall back to scipy in linear space
        return float(np.log(special.hyp1f1(a, b, kappa)))
    if kappa > _KUMMER_ASYMPTOTIC:
        return _log_kummer_asymptotic(a, b, kappa)
    return _log_kummer_series(a, b, kappa)


def kummer_m(a, b, kappa):
    """Kummer confluent hypergeometric function ``M(a, b, kappa)``."""
    return math.exp(log_kummer_m(a, b, kappa))


def y_p(kappa, p=4):
    """``M'(1/2, p/2, kappa) / M(1/2, p/2, kappa)``: the Watson second moment ``E[(mu^T x)^2]``."""
    b = p / 2
    return math.exp(math.log(0.5 / b) + log_kummer_m(1.5, b + 1, kappa) - log_kummer_m(0.5, b, kappa))


def _y_p_derivative(kappa, p, y):
    # Y' = M''/M - Y^2 = Var[(mu^T x)^2] > 0
    b = p / 2
    second = math.exp(
        math.log(0.75 / (b * (b + 1))) + log_kummer_m(2.5, b + 2, kappa) - log_kummer_m(0.5, b, kappa)
    )
    return second - y * y


def y_p_inverse(t, p=4):
    """``kappa`` with ``y_p(kappa, p) == t``; clamped to ``[-KAPPA_MAX, KAPPA_MAX]``."""
    t = float(t)
    if not 0 < t < 1:
        raise DegenerateScatter(f"Watson moment {t} outside (0, 1)")
    if t >= y_p(KAPPA_MAX, p):
        return KAPPA_MAX
    if t <= y_p(-KAPPA_MAX, p):
        return -KAPPA_MAX
    y0 = 1.0 / p
    if t > y0:
        # large-kappa behaviour: 1 - Y ~ (p - 1) / (2 kappa)
        x0 = (p - 1) / (2 * (1 - t))
        lo, hi = 0.0, max(x0, 1.0)
        while y_p(hi, p) < t and hi < KAPPA_MAX:
            hi = min(2 * hi, KAPPA_MAX)
    else:
        # large negative kappa: Y ~ 1 / (2 |kappa|)
        x0 = -1 / (2 * t)
        lo, hi = min(x0, -1.0), 0.0
        while y_p(lo, p) > t and lo > -KAPPA_MAX:
            lo = max(2 * lo, -KAPPA_MAX)
    return _solve_increasing(
        lambda k: y_p(k, p), lambda k, fk: _y_p_derivative(k, p, fk), t, x0, lo, hi
    )
