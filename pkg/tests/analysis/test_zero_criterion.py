import itertools
import math

import numpy as np
import pytest

from merozero.analysis.contour_oracle import find_zeros_in_disk
from merozero.analysis.kernel_model import (
    CoefficientKind,
    CoefficientSequence,
    KernelSpec,
    PoleKind,
    PoleSequence,
)
from merozero.analysis.power_sums import zero_power_sum
from merozero.analysis.zero_criterion import (
    Decision,
    Verdict,
    classify_squared,
    classify_unit_weight,
    family_variation_residual,
    implied_pole_sums,
    linear_weight,
    mt_relation_residuals,
    newton_moment_check,
    residuals,
    weight_family_samples,
)
from merozero.base import HypothesisViolated, InsufficientDataError


def test_example1_has_zeros(example1):
    report = residuals(example1, n_max=4)
    assert report.decision is Decision.HAS_ZEROS
    assert report.witness == 0
    assert report.n_range == (0, 4)
    assert abs(report.residuals[0].value - math.pi**2 / 10) < 1e-8


def test_example2_candidate_zero_free(example2):
    report = residuals(example2, n_max=8)
    assert abs(report.residuals[0].value) < 1e-8
    assert report.decision is Decision.CANDIDATE_ZERO_FREE
    assert report.witness is None


@pytest.mark.parametrize("kernel_order", [1, 2])
def test_single_pole_residuals_vanish(single_pole, kernel_order):
    spec = single_pole.with_kernel_order(kernel_order)
    report = residuals(spec, n_max=8)
    assert report.decision is Decision.CANDIDATE_ZERO_FREE
    assert sorted(report.residuals) == list(range(9))
    for r in report.residuals.values():
        assert not r.exceeds_bound()


def test_half_integer_lattice_residuals_vanish(half_integer_lattice):
    report = residuals(half_integer_lattice, n_max=8)
    assert report.n_range == (1, 8)
    assert report.decision is Decision.CANDIDATE_ZERO_FREE


def test_no_admissible_order(example1):
    report = residuals(example1, n_max=1, rho_estimate=4.0)
    assert report.decision is Decision.INCONCLUSIVE
    assert report.residuals == {}


def test_residual_tolerance_checked(example1):
    with pytest.raises(ValueError, match="tolerance"):
        residuals(example1, tolerance=0.0)


def test_classify_unit_weight_single_pole(single_pole):
    result = classify_unit_weight(single_pole)
    assert result.verdict is Verdict.MATCHES_CAUCHY
    assert abs(result.parameter - 2) < 1e-9


def test_classify_squared_single_pole(single_pole):
    result = classify_squared(single_pole.with_kernel_order(2))
    assert result.verdict is Verdict.MATCHES_SQUARED_CAUCHY
    assert abs(result.parameter - 2) < 1e-9


def test_classify_squared_lattice(half_integer_lattice):
    result = classify_squared(half_integer_lattice)
    assert result.verdict is Verdict.MATCHES_SINE
    assert abs(result.parameter - 0.5) < 1e-9


def test_classify_detects_zeros(example1):
    result = classify_unit_weight(example1)
    assert result.verdict is Verdict.NOT_ZERO_FREE
    assert result.parameter is None
    assert result.max_residual > result.residual_bound


def test_classify_preconditions(example2, single_pole):
    with pytest.raises(HypothesisViolated, match="unit coefficients"):
        classify_unit_weight(example2)
    with pytest.raises(HypothesisViolated, match="kernel_order"):
        classify_squared(single_pole)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_moment_check_exhaustive_grid(n):
    for values in itertools.product((-1, 0, 1), repeat=n):
        check = newton_moment_check(list(values))
        if any(values):
            assert not check.all_zero
            assert 1 <= check.witness <= n
        else:
            assert check.all_zero
            assert check.witness is None
            assert check.elementary == (0,) * n


def test_moment_check_roots_of_unity():
    roots = np.exp(2j * np.pi * np.arange(5) / 5)
    check = newton_moment_check(roots)
    assert not check.all_zero
    assert check.witness == 5


def test_moment_check_float_zeros():
    check = newton_moment_check([0.0, 0.0, 0.0])
    assert check.all_zero
    assert check.radius_bound == 0.0


def test_mt_relations_match_zero_sums(example1):
    relations = mt_relation_residuals(example1)
    for N, relation in enumerate(relations):
        expected = -zero_power_sum(example1, N, 0.5).value
        assert abs(relation.value - expected) < 1e-7 * max(1.0, abs(expected))


def test_mt_relations_vanish_for_single_pole(single_pole):
    for relation in mt_relation_residuals(single_pole):
        assert abs(relation.value) <= relation.error_bound + 1e-14


def test_implied_pole_sums_single_pole():
    M = [2.0**-l for l in range(1, 6)]
    assert np.allclose(implied_pole_sums(M, 4), [2.0**-l for l in range(1, 5)])


def manufactured_family(deltas, L):
    """M_1 = 1, M_l = (0.5 + 0.2 sin(delta + l))^(l-1), with T forced by the criterion."""
    M = np.array(
        [
            [1.0] + [(0.5 + 0.2 * math.sin(d + l)) ** (l - 1) for l in range(2, L + 1)]
            for d in deltas
        ]
    )
    T = np.array([implied_pole_sums(row, L - 1)[1:] for row in M])
    return M, T


@pytest.mark.parametrize("l", [3, 4])
def test_family_variation_is_second_order(l):
    L = 5
    centre = 0.3
    errors = []
    for h in (0.1, 0.05, 0.025):
        deltas = centre + h * np.arange(-2, 3)
        M, T = manufactured_family(deltas, L)
        variation = family_variation_residual(M, T, h)
        assert variation.orders == (3, 4, 5)
        errors.append(abs(variation.residuals[1, l - 3]))
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.2 <= coarse / fine <= 4.8


def test_family_variation_validation():
    M, T = manufactured_family(np.linspace(0, 0.4, 5), 4)
    with pytest.raises(InsufficientDataError):
        family_variation_residual(M[:3], T[:3], 0.1)
    with pytest.raises(ValueError, match="M_1"):
        family_variation_residual(2 * M, T, 0.1)
    with pytest.raises(ValueError, match="shape"):
        family_variation_residual(M, T[:, :1], 0.1)


def test_weight_family_samples(rational_two_pole):
    deltas = np.linspace(0.0, 0.2, 5)
    M, T = weight_family_samples(rational_two_pole, deltas, 4)
    assert M.shape == (5, 4)
    assert T.shape == (5, 2)
    assert np.allclose(M[:, 0], 1.0)
    assert np.allclose(T[0], [1 + 1 / 4, 1 + 1 / 8])
    # c_k (1 + delta k) with c = (1, 1): M_2 / M_1 = (1 + d + (1 + 2d)/4) / (1 + d + (1 + 2d)/2)
    d = deltas[2]
    expected = (1 + d + (1 + 2 * d) / 4) / (1 + d + (1 + 2 * d) / 2)
    assert abs(M[2, 1] - expected) < 1e-14
    assert linear_weight(0.5, 2, 3.0) == 6.0


def test_classify_squared_two_poles_has_zeros():
    spec = KernelSpec(
        PoleSequence(PoleKind.LIST, values=(1.0, 4.0)),
        CoefficientSequence(CoefficientKind.CONSTANT, value=1.0),
        kernel_order=2,
    )
    assert classify_squared(spec).verdict is Verdict.NOT_ZERO_FREE


def test_classify_unit_weight_two_poles_has_zeros(rational_two_pole):
    assert classify_unit_weight(rational_two_pole).verdict is Verdict.NOT_ZERO_FREE


def test_mt_relations_match_residuals_for_random_poles():
    rng = np.random.default_rng(7)
    spec = KernelSpec(
        PoleSequence(PoleKind.LIST, values=tuple(rng.uniform(1.0, 5.0, 3))),
        CoefficientSequence(CoefficientKind.LIST, values=tuple(rng.uniform(0.5, 2.0, 3))),
    )
    report = residuals(spec, n_max=3)
    for N, relation in enumerate(mt_relation_residuals(spec)):
        expected = -report.residuals[N].value
        assert abs(relation.value - expected) < 1e-9 * max(1.0, abs(expected))


def test_certified_zeros_are_found(rational_two_pole):
    assert residuals(rational_two_pole, n_max=4).decision is Decision.HAS_ZEROS
    zero_list = find_zeros_in_disk(rational_two_pole, 10.0)
    assert zero_list.total_multiplicity >= 1


def test_candidate_zero_free_has_no_zeros(single_pole):
    assert residuals(single_pole, n_max=4).decision is Decision.CANDIDATE_ZERO_FREE
    zero_list = find_zeros_in_disk(single_pole, 10.0)
    assert zero_list.total_multiplicity == 0
    assert zero_list.exhaustive_in is not None
