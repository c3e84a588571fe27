import math

import pytest
from scipy.special import gamma, gammainc

from bslms.special import GammaDomainError, incomplete_gamma_lower


@pytest.mark.parametrize("x", [1e-6, 0.01, 0.5, 1.0, 3.7, 10.0, 50.0, 200.0])
def test_matches_scipy_to_ten_digits(x):
    for twice in range(1, 80):
        a = twice / 2.0
        ref = gammainc(a, x) * gamma(a)
        got = incomplete_gamma_lower(a, x)
        assert got == pytest.approx(ref, rel=1e-10), (a, x)


def test_closed_forms():
    x = 0.7
    assert incomplete_gamma_lower(0.5, x) == pytest.approx(math.sqrt(math.pi) * math.erf(math.sqrt(x)), rel=1e-15)
    assert incomplete_gamma_lower(1.0, x) == pytest.approx(1 - math.exp(-x), rel=1e-15)
    assert incomplete_gamma_lower(2.0, x) == pytest.approx(1 - (1 + x) * math.exp(-x), rel=1e-13)


def test_large_order_small_argument_keeps_relative_accuracy():
    # forward recurrence from gamma(1/2) would cancel catastrophically here
    a, x = 30.5, 0.5
    ref = gammainc(a, x) * gamma(a)
    assert ref < 1e-10
    assert incomplete_gamma_lower(a, x) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("a,x", [(0.3, 1.0), (0.0, 1.0), (-0.5, 1.0), (1.0, 0.0), (1.5, -2.0)])
def test_domain_errors(a, x):
    with pytest.raises(GammaDomainError):
        incomplete_gamma_lower(a, x)
