import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from merozero.analysis.kernel_model import (
    CoefficientKind,
    CoefficientSequence,
    KernelSpec,
    PoleKind,
    PoleSequence,
)
from merozero.analysis.power_sums import (
    Flavor,
    Route,
    ZeroTarget,
    check_order_hypothesis,
    first_admissible_order,
    fprime_zero_power_sum,
    pole_power_sum,
    power_sum_table,
    weighted_power_sum,
    zero_power_sum,
    zero_power_sum_squared,
    zero_power_sums,
)
from merozero.analysis.series_calculus import logderiv_from_spec
from merozero.base import (
    ExponentBelowConvergenceIndex,
    HypothesisViolated,
    SpecValidationError,
)


def polished_roots(coefficients):
    """numpy.roots followed by a few Newton steps on the polynomial."""
    derivative = np.polyder(coefficients)
    roots = np.roots(coefficients)
    for _ in range(5):
        step = np.polyval(coefficients, roots) / np.polyval(derivative, roots)
        roots = roots - np.where(np.isfinite(step), step, 0)
    return roots


def rational_numerators(poles, coeffs):
    """Numerators of f = P/Q and of f' = (P'Q - PQ')/Q^2."""
    Q = np.poly(poles)
    P = np.zeros(len(poles), dtype=complex)
    for k, c in enumerate(coeffs):
        P = np.polyadd(P, c * np.poly(np.delete(poles, k)))
    R = np.polysub(np.polymul(np.polyder(P), Q), np.polymul(P, np.polyder(Q)))
    return np.trim_zeros(P, "f"), np.trim_zeros(R, "f")


def test_first_admissible_order():
    assert first_admissible_order(0.0) == 0
    assert first_admissible_order(0.5) == 0
    assert first_admissible_order(1.0) == 1
    assert first_admissible_order(2.3) == 2


def test_check_order_hypothesis():
    check_order_hypothesis(0, 0.5)
    with pytest.raises(HypothesisViolated, match="N > rho - 1"):
        check_order_hypothesis(0, 1.0)


def test_example1_zero_power_sum(example1):
    value = zero_power_sum(example1, 0, 0.5)
    assert abs(value.value - math.pi**2 / 10) < 1e-8
    assert value.error_bound < 1e-8
    b = logderiv_from_spec(example1, 0)
    assert abs(b[0].value - math.pi**2 / 15) < 1e-9


def test_example2_zero_power_sum(example2):
    expected = -(9 + math.pi * math.sqrt(3)) / 2
    assert abs(pole_power_sum(example2, 1).value - expected) < 1e-8
    assert abs(logderiv_from_spec(example2, 0)[0].value - expected) < 1e-8
    assert abs(weighted_power_sum(example2, 1).value + 2 * math.pi * math.sqrt(3)) < 1e-8
    assert abs(zero_power_sum(example2, 0, 0.5).value) < 1e-8


def test_two_poles(rational_two_pole):
    assert abs(zero_power_sum(rational_two_pole, 0, 0.0).value - 2 / 3) < 1e-13
    for route in Route:
        value = fprime_zero_power_sum(rational_two_pole, 0, 0.0, route=route)
        assert abs(value.value - 6 / 5) < 1e-12


def test_fprime_routes_agree(example1):
    via_poles = fprime_zero_power_sum(example1, 1, 0.5, route=Route.VIA_POLES)
    via_zeros = fprime_zero_power_sum(example1, 1, 0.5, route=Route.VIA_ZEROS)
    assert abs(via_poles.value - via_zeros.value) <= via_poles.error_bound + via_zeros.error_bound


def test_squared_kernel_two_poles():
    # 1/(z-1)^2 + 1/(z-4)^2 has numerator 2z^2 - 10z + 17
    spec = KernelSpec(
        PoleSequence(PoleKind.LIST, values=(1.0, 4.0)),
        CoefficientSequence(CoefficientKind.CONSTANT, value=1.0),
        kernel_order=2,
    )
    assert abs(zero_power_sum_squared(spec, 0, 0.0).value - 10 / 17) < 1e-13
    with pytest.raises(SpecValidationError, match="kernel_order 1"):
        zero_power_sum(spec, 0, 0.0)


def test_repeated_poles_weight_only_the_weighted_sum():
    spec = KernelSpec(
        PoleSequence(PoleKind.LIST, values=(1.0, 1.0, 2.0)),
        CoefficientSequence(CoefficientKind.CONSTANT, value=1.0),
    )
    # the pole 1 merges into one term with coefficient 2
    assert abs(weighted_power_sum(spec, 1).value - 2.5) < 1e-14
    assert abs(pole_power_sum(spec, 1).value - 1.5) < 1e-14


def test_half_integer_lattice(half_integer_lattice):
    T1 = pole_power_sum(half_integer_lattice, 1)
    assert T1.order_dependent
    assert abs(T1.value) <= max(T1.error_bound, 1e-12)
    with pytest.raises(HypothesisViolated):
        zero_power_sum_squared(half_integer_lattice, 0, 1.0)
    value = zero_power_sum_squared(half_integer_lattice, 1, 1.0)
    assert abs(value.value) <= value.error_bound + 1e-9


def test_exponent_below_convergence_index():
    spec = KernelSpec(
        PoleSequence(PoleKind.POWER, a=1.0, p=1.0, b=0.5),
        CoefficientSequence(CoefficientKind.DECAYING, value=1.0, sigma=0.5),
    )
    with pytest.raises(ExponentBelowConvergenceIndex):
        pole_power_sum(spec, 1)
    table = power_sum_table(spec, [1, 2, 3])
    assert table.unavailable == (1,)
    assert sorted(table.entries) == [2, 3]
    weighted = power_sum_table(spec, [1], Flavor.M)
    assert weighted.flavor is Flavor.M
    assert weighted.unavailable == (1,)


def test_zero_power_sums_table(example1):
    table = zero_power_sums(example1, 3, 0.5)
    assert sorted(table.entries) == [0, 1, 2, 3]
    assert table.skipped == ()
    assert table.target is ZeroTarget.F
    fprime = zero_power_sums(example1, 2, 0.5, target=ZeroTarget.FPRIME)
    assert sorted(fprime.entries) == [0, 1, 2]


def test_zero_power_sums_rejects_fprime_for_squared(half_integer_lattice):
    with pytest.raises(SpecValidationError):
        zero_power_sums(half_integer_lattice, 2, 1.0, target=ZeroTarget.FPRIME)


def test_zero_power_sum_requires_nonzero_origin_value():
    spec = KernelSpec(
        PoleSequence(PoleKind.LIST, values=(1.0, -1.0)),
        CoefficientSequence(CoefficientKind.CONSTANT, value=1.0),
    )
    with pytest.raises(HypothesisViolated):
        zero_power_sum(spec, 0, 0.0)


complex_poles = st.complex_numbers(min_magnitude=0.5, max_magnitude=3.0, allow_nan=False)
complex_coeffs = st.complex_numbers(min_magnitude=0.5, max_magnitude=2.0, allow_nan=False)


@given(st.lists(st.tuples(complex_poles, complex_coeffs), min_size=2, max_size=6))
@settings(max_examples=50, deadline=None)
def test_formula_matches_polynomial_roots(terms):
    poles = np.array([t for t, _ in terms], dtype=complex)
    coeffs = np.array([c for _, c in terms], dtype=complex)
    gaps = np.abs(poles[:, None] - poles[None, :]) + np.eye(len(poles))
    assume(gaps.min() > 0.3)
    f0 = np.sum(coeffs / -poles)
    fp0 = np.sum(-coeffs / poles**2)
    assume(abs(f0) > 0.1 and abs(fp0) > 0.1)

    P, R = rational_numerators(poles, coeffs)
    assume(len(P) >= 2 and len(R) >= 2)
    zeros, critical = polished_roots(P), polished_roots(R)
    assume(np.abs(zeros).min() > 0.2 and np.abs(critical).min() > 0.2)
    for roots in (zeros, critical):
        separation = np.abs(roots[:, None] - roots[None, :]) + np.eye(len(roots))
        assume(separation.min() > 0.05)

    spec = KernelSpec(
        PoleSequence(PoleKind.LIST, values=tuple(poles)),
        CoefficientSequence(CoefficientKind.LIST, values=tuple(coeffs)),
    )
    for N in range(5):
        terms_f = zeros ** -(N + 1)
        assert abs(zero_power_sum(spec, N, 0.0).value - terms_f.sum()) <= 1e-10 * np.abs(
            terms_f
        ).sum()
        terms_fp = critical ** -(N + 1)
        for route in Route:
            value = fprime_zero_power_sum(spec, N, 0.0, route=route).value
            assert abs(value - terms_fp.sum()) <= 1e-10 * np.abs(terms_fp).sum()
