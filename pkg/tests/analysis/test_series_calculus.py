import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merozero.analysis.kernel_model import evaluate_many
from merozero.analysis.series_calculus import (
    LogDerivKind,
    TaylorCoeffs,
    compose_from_logderiv,
    hadamard_polynomial_derivative,
    logderiv_coeffs,
    logderiv_from_spec,
    logderiv_values,
    second_logderiv_coeffs,
    taylor_coeffs,
)
from merozero.base import ValueWithError, ZeroConstantTermError


def cauchy_coefficients(g, n_max, radius=0.5, points=512):
    """Taylor coefficients of g at 0 from the trapezoidal Cauchy integral."""
    z = radius * np.exp(2j * np.pi * np.arange(points) / points)
    values = g(z)
    return np.array([np.mean(values * z ** (-n)) for n in range(n_max + 1)])


def test_taylor_coeffs_two_poles(rational_two_pole):
    a = taylor_coeffs(rational_two_pole, 5)
    expected = [-(1 + 2.0 ** -(n + 1)) for n in range(6)]
    assert np.allclose(a.values(), expected, rtol=0, atol=1e-14)
    assert len(a.derivative()) == 5
    assert a.derivative()[0].value == a[1].value


def test_taylor_coeffs_squared_lattice(half_integer_lattice):
    a = taylor_coeffs(half_integer_lattice, 2)
    assert abs(a[0].value - math.pi**2) < 1e-9
    assert abs(a[1].value) <= max(a[1].error_bound, 1e-11)
    # pi^2 / cos^2(pi z) = pi^2 + pi^4 z^2 + ...
    assert abs(a[2].value - math.pi**4) < 1e-8


def test_logderiv_two_poles(rational_two_pole):
    b = logderiv_from_spec(rational_two_pole, 0)
    assert abs(b[0].value - 5 / 6) < 1e-14
    assert b[0].error_bound < 1e-12


def test_logderiv_matches_cauchy_integral(rational_two_pole):
    def g(z):
        f = evaluate_many(rational_two_pole, z).values
        fp = evaluate_many(rational_two_pole, z, d=1).values
        return fp / f

    b = logderiv_from_spec(rational_two_pole, 6)
    oracle = cauchy_coefficients(g, 6)
    for n in range(7):
        assert abs(b[n].value - oracle[n]) < 1e-10


def test_logderiv_example1_against_cauchy_integral(example1):
    def g(z):
        return evaluate_many(example1, z, d=1).values / evaluate_many(example1, z).values

    b = logderiv_from_spec(example1, 4)
    oracle = cauchy_coefficients(g, 4)
    for n in range(5):
        assert abs(b[n].value - oracle[n]) <= b[n].error_bound + 1e-10


def test_second_logderiv_two_poles(rational_two_pole):
    second = second_logderiv_coeffs(rational_two_pole, 0)
    assert second.which is LogDerivKind.FPRIME
    assert abs(second[0].value - 9 / 5) < 1e-13


def test_combined_logderiv(rational_two_pole):
    first = logderiv_from_spec(rational_two_pole, 3)
    second = second_logderiv_coeffs(rational_two_pole, 3)
    combined = second_logderiv_coeffs(rational_two_pole, 3, which=LogDerivKind.COMBINED)
    assert combined.which is LogDerivKind.COMBINED
    for n in range(4):
        assert abs(combined[n].value - (second[n].value - 2 * first[n].value)) < 1e-12


def test_second_logderiv_rejects_first_kind(rational_two_pole):
    with pytest.raises(ValueError, match="logderiv_coeffs"):
        second_logderiv_coeffs(rational_two_pole, 1, which=LogDerivKind.F)


def test_compose_inverts_logderiv(example1):
    a = taylor_coeffs(example1, 6)
    b = logderiv_coeffs(a, 5)
    rebuilt = compose_from_logderiv(a[0].value, [c.value for c in b.coeffs])
    assert np.allclose(rebuilt, a.values(), rtol=1e-12, atol=0)


@given(st.integers(min_value=2, max_value=32), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_compose_inverts_logderiv_values(length, seed):
    rng = np.random.default_rng(seed)
    a = (rng.uniform(-1, 1, length) + 1j * rng.uniform(-1, 1, length)) * 0.25 ** np.arange(length)
    a[0] = 1.0 + rng.uniform(0, 1)
    b = logderiv_values(a, length - 2)
    assert np.allclose(compose_from_logderiv(a[0], b), a, rtol=0, atol=1e-12)


def test_logderiv_values_exact_series():
    # a = 1, 1, 1/2, 1/6, ... is exp(z): f'/f = 1
    a = [1 / math.factorial(n) for n in range(8)]
    b = logderiv_values(a, 6)
    assert np.allclose(b, [1, 0, 0, 0, 0, 0, 0], atol=1e-15)


def test_logderiv_zero_constant_term():
    a = TaylorCoeffs((ValueWithError(1e-14, 1e-12), ValueWithError(1.0), ValueWithError(1.0)))
    with pytest.raises(ZeroConstantTermError):
        logderiv_coeffs(a, 0)
    with pytest.raises(ZeroConstantTermError):
        logderiv_values([0.0, 1.0], 0)


def test_logderiv_needs_enough_coefficients():
    with pytest.raises(ValueError, match="Need 3"):
        logderiv_values([1.0, 2.0], 1)


def test_taylor_order_limit(example1):
    with pytest.raises(ValueError, match="n_max"):
        taylor_coeffs(example1, 65)


def test_hadamard_polynomial_derivative(rational_two_pole):
    assert hadamard_polynomial_derivative(rational_two_pole, 0) == ()
    coeffs = hadamard_polynomial_derivative(rational_two_pole, 2)
    b = logderiv_from_spec(rational_two_pole, 1)
    assert [c.value for c in coeffs] == [c.value for c in b.coeffs]
    with pytest.raises(ValueError):
        hadamard_polynomial_derivative(rational_two_pole, -1)
