"""Lower incomplete gamma function at half-integer orders."""

from __future__ import annotations

import math

from .errors import BSLMSError

__all__ = ["incomplete_gamma_lower"]


class GammaDomainError(BSLMSError, ValueError):
    """Order is not a positive half-integer or the argument is not positive."""


def _series(a: float, x: float) -> float:
    # gamma(a, x) = x^a e^-x sum_k x^k / (a (a+1) ... (a+k)); fast for x < a + 1
    term = 1.0 / a
    total = term
    k = 0
    while abs(term) > 1e-17 * abs(total):
        k += 1
        term *= x / (a + k)
        total += term
        if k > 10_000:
            break
    return math.exp(a * math.log(x) - x) * total


def incomplete_gamma_lower(a: float, x: float) -> float:
    """``gamma(a, x) = integral_0^x t^(a-1) e^-t dt`` for ``a`` in {1/2, 1, 3/2, ...}.

    Starts from ``gamma(1/2, x) = sqrt(pi) erf(sqrt(x))`` or
    ``gamma(1, x) = 1 - e^-x`` and climbs with
    ``gamma(a+1, x) = a gamma(a, x) - x^a e^-x``. That recurrence loses
    accuracy once ``a`` exceeds ``x`` (the result becomes a small difference
    of large terms), so orders above ``x + 1`` are summed from the power
    series instead.
    """
    twice = 2.0 * a
    if twice != int(twice) or a <= 0:
        raise GammaDomainError(f"order must be a positive half-integer, got {a!r}")
    if not x > 0:
        raise GammaDomainError(f"argument must be positive, got {x!r}")
    if a > x + 1.0:
        return _series(a, x)
    if int(twice) % 2:
        order, value = 0.5, math.sqrt(math.pi) * math.erf(math.sqrt(x))
    else:
        order, value = 1.0, -math.expm1(-x)
    while order < a:
        value = order * value - math.exp(order * math.log(x) - x)
        order += 1.0
    return value
