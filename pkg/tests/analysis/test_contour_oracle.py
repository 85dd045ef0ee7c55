import math

import mpmath
import numpy as np
import pytest

from merozero.analysis.contour_oracle import (
    JITTER_FACTORS,
    ContourSpec,
    KernelFunction,
    MeromorphicFunction,
    Rect,
    SineFixture,
    ZeroEntry,
    ZeroList,
    admissible_contour,
    corollary1_logderiv,
    count_zeros_minus_poles,
    direct_zero_power_sum,
    find_zeros_in_disk,
    newton,
    weierstrass_factor,
)
from merozero.analysis.kernel_model import evaluate_many, expand_poles
from merozero.base import ConvergenceError, HypothesisViolated, PoleProximityError


def integer_zeros(K):
    return [float(k) for k in range(1, K + 1)] + [-float(k) for k in range(1, K + 1)]


def test_contour_spec_validation():
    with pytest.raises(ValueError, match="positive"):
        ContourSpec(0j, 0.0)
    with pytest.raises(ValueError, match="power of 2"):
        ContourSpec(0j, 1.0, quadrature_points=100)
    assert len(ContourSpec(1j, 2.0, 8).nodes()) == 8


def test_admissible_contour_moves_off_pole(rational_two_pole):
    contour = admissible_contour(rational_two_pole, ContourSpec(0j, 2.0))
    assert contour.radius == pytest.approx(2.0 * (1 + JITTER_FACTORS[0]))
    untouched = ContourSpec(0j, 3.0)
    assert admissible_contour(rational_two_pole, untouched) is untouched


def test_count_two_poles(rational_two_pole):
    # one zero at 3/2 against the poles 1 and 2
    assert count_zeros_minus_poles(rational_two_pole, ContourSpec(0j, 4.0)).count == -1
    assert count_zeros_minus_poles(rational_two_pole, ContourSpec(0j, 0.5)).count == 0
    assert count_zeros_minus_poles(rational_two_pole, ContourSpec(1.5, 0.2)).count == 1


def test_count_sine_fixture():
    result = count_zeros_minus_poles(SineFixture(), ContourSpec(0j, 2.5))
    assert result.count == 4
    assert result.margin < 0.25


def test_find_zeros_two_poles(rational_two_pole):
    zero_list = find_zeros_in_disk(rational_two_pole, 4.0)
    assert zero_list.total_multiplicity == 1
    assert abs(zero_list.zeros[0].location - 1.5) < 1e-12
    assert zero_list.exhaustive_in is not None


def test_find_zeros_sine_fixture():
    zero_list = find_zeros_in_disk(SineFixture(), 3.5)
    assert np.allclose(zero_list.locations(), [-3, -2, -1, 1, 2, 3], atol=1e-10)
    assert zero_list.exhaustive_in is not None
    inner = zero_list.within(2.0)
    assert inner.total_multiplicity == 4
    assert inner.exhaustive_in.radius == 2.0


def test_find_zeros_example1_small_disk(example1):
    zero_list = find_zeros_in_disk(example1, 30.0)
    assert zero_list.total_multiplicity == 4
    assert zero_list.exhaustive_in is not None
    for k, entry in enumerate(zero_list.zeros, start=1):
        assert k**2 < entry.location.real < (k + 1) ** 2
        assert abs(entry.location.imag) < 1e-9


def test_example1_direct_sum_brackets_formula(example1):
    zero_list = find_zeros_in_disk(example1, 1e4)
    assert zero_list.total_multiplicity == 99
    assert zero_list.exhaustive_in is not None
    direct = direct_zero_power_sum(zero_list, 0)
    assert direct.incomplete
    # the k-th zero lies in (k^2, (k+1)^2)
    lower = direct.value.real + float(mpmath.zeta(2, 101)) - direct.error_bound
    upper = direct.value.real + float(mpmath.zeta(2, 100)) + direct.error_bound
    assert lower - 1e-4 <= math.pi**2 / 10 <= upper + 1e-4


def test_direct_sum_with_tail():
    zero_list = ZeroList(tuple(ZeroEntry(s, 1, 1e-15) for s in integer_zeros(100)))
    result = direct_zero_power_sum(zero_list, 1, tail_bound=0.02)
    expected = 2 * sum(1 / k**2 for k in range(1, 101))
    assert abs(result.value - expected) < 1e-12
    assert result.incomplete
    assert result.error_bound >= 0.02


def test_direct_sum_rejects_zero_at_origin():
    with pytest.raises(HypothesisViolated):
        direct_zero_power_sum(ZeroList((ZeroEntry(0j, 1, 0.0),)), 0)


def test_zero_list_rejects_bad_multiplicity():
    with pytest.raises(ValueError):
        ZeroList((ZeroEntry(1.0, 0, 0.0),))


def test_logderiv_sine_fixture():
    K = 200
    z = 0.5
    tail = 2 * abs(z) / (K + 0.5)
    value = corollary1_logderiv(integer_zeros(K), [], [], 1, z, zero_tail_bound=tail)
    assert abs(value.value + 2) <= value.error_bound
    assert value.error_bound < 0.01
    exact = complex(SineFixture().derivatives(z)[0] / SineFixture().values(z)[0])
    assert abs(exact + 2) < 1e-12


def test_logderiv_finite_sum_is_exact(rational_two_pole):
    z = 0.3j
    zero_list = find_zeros_in_disk(rational_two_pole, 4.0)
    poles = expand_poles(rational_two_pole, 2)
    value = corollary1_logderiv(zero_list, poles, [], 0, z)
    f = evaluate_many(rational_two_pole, [z]).values[0]
    fp = evaluate_many(rational_two_pole, [z], d=1).values[0]
    assert abs(value.value - fp / f) < 1e-10


def test_logderiv_collision():
    with pytest.raises(PoleProximityError):
        corollary1_logderiv([1.0], [2.0], [], 1, 2.0)
    with pytest.raises(ValueError):
        corollary1_logderiv([1.0], [], [], -1, 0.5)


def test_weierstrass_factor():
    assert weierstrass_factor(0.5, 2) == pytest.approx(0.5 * math.exp(0.625))
    assert weierstrass_factor(0.25, 0) == pytest.approx(0.75)
    assert weierstrass_factor(1.0, 3) == 0
    assert np.allclose(weierstrass_factor(np.array([0.0, 2.0]), 1), [1.0, -math.exp(2)])


def test_newton_on_sine_fixture():
    root, step = newton(SineFixture(), 2.2)
    assert abs(root - 2) < 1e-12
    assert step < 1e-10


class Unevaluable(MeromorphicFunction):
    def evaluate(self, z, d=0):
        raise ConvergenceError("tail-not-convergent")

    def poles_within(self, center, radius):
        return []


def test_newton_gives_up_on_evaluation_errors():
    assert newton(Unevaluable(), 1.0) is None


def test_newton_stays_in_region(rational_two_pole):
    func = KernelFunction(rational_two_pole)
    # far from the poles f ~ 2/z, so Newton doubles z
    assert newton(func, 10.0, region=Rect(9 - 1j, 11 + 1j)) is None
    root, _ = newton(func, 1.4, region=Rect(1.1 - 0.5j, 1.9 + 0.5j))
    assert abs(root - 1.5) < 1e-12


@pytest.mark.parametrize("R", [10.0, 30.0, 100.0])
def test_find_zeros_two_poles_large_disk(rational_two_pole, R):
    zero_list = find_zeros_in_disk(rational_two_pole, R)
    assert zero_list.total_multiplicity == 1
    assert abs(zero_list.zeros[0].location - 1.5) < 1e-12
    assert zero_list.exhaustive_in is not None


def test_rect_split_covers_parent():
    rect = Rect(-1 - 1j, 1 + 1j)
    children = rect.split(0.5)
    assert sum(abs((c.upper - c.lower).real * (c.upper - c.lower).imag) for c in children) == 4
    assert rect.boundary_distance(0.5j) == pytest.approx(0.5)
    assert rect.boundary_distance(2.0) == 0.0
