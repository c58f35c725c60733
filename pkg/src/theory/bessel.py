"""Modified Bessel functions I0, I1 and the mean-resultant function A(κ) = I1/I0.

Power series up to SERIES_CUTOFF, Hankel asymptotic expansion above it. The
asymptotic branch keeps the exponential factor separate so that log I0 and the
ratio A(κ) stay finite for arbitrarily large κ.
"""

import math

from scipy.optimize import brentq

from errors import OutOfRange

SERIES_CUTOFF = 15.0
MAX_ASYMPTOTIC_TERMS = 40


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa < 0:
        raise OutOfRange(f"concentration must be finite and nonnegative, got {kappa}")
    return kappa


def _series(order: int, x: float) -> float:
    half = x / 2.0
    term = half**order / math.factorial(order)
    total = term
    k = 0
    while term > total * 1e-17:
        k += 1
        term *= half * half / (k * (k + order))
        total += term
    return total


def _asymptotic_sum(order: int, x: float) -> float:
    """Σ_k (−1)^k a_k(ν) / x^k, truncated once terms stop shrinking."""
    mu = 4.0 * order * order
    term = 1.0
    total = 1.0
    for k in range(1, MAX_ASYMPTOTIC_TERMS + 1):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total


def _scaled_exp(x: float, total: float) -> float:
    # e^x / sqrt(2πx) · Σ, assembled in log space; inf past the float range
    try:
        return math.exp(x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total))
    except OverflowError:
        return math.inf


def bessel_i0(kappa: float) -> float:
    x = _check_kappa(kappa)
    if x <= SERIES_CUTOFF:
        return _series(0, x)
    return _scaled_exp(x, _asymptotic_sum(0, x))


def bessel_i1(kappa: float) -> float:
    x = _check_kappa(kappa)
    if x <= SERIES_CUTOFF:
        return _series(1, x)
    return _scaled_exp(x, _asymptotic_sum(1, x))


def log_bessel_i0(kappa: float) -> float:
    x = _check_kappa(kappa)
    if x <= SERIES_CUTOFF:
        return math.log(_series(0, x))
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(_asymptotic_sum(0, x))


def mean_resultant(kappa: float) -> float:
    """A(κ) = I1(κ)/I0(κ)."""
    x = _check_kappa(kappa)
    if x == 0.0:
        return 0.0
    if x <= SERIES_CUTOFF:
        return _series(1, x) / _series(0, x)
    return _asymptotic_sum(1, x) / _asymptotic_sum(0, x)


def mean_resultant_inverse(r: float) -> float:
    """κ with A(κ) = r, found by bracketed root search."""
    r = float(r)
    if not 0.0 <= r < 1.0:
        raise OutOfRange(f"mean resultant length must lie in [0, 1), got {r}")
    if r == 0.0:
        return 0.0

    hi = max(2.0 * r * (2.0 - r * r) / (1.0 - r * r), 1.0)
    while mean_resultant(hi) < r:
        hi *= 2.0
    return float(brentq(lambda k: mean_resultant(k) - r, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500))
