"""
Zero-free criterion and classification checks.

f has no zeros exactly when r_N = m T_{N+1} - b_N vanishes for every N > rho - 1. A nonzero
residual certifies zeros; vanishing residuals up to a finite N_max are only evidence.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from merozero.analysis.kernel_model import (
    CoefficientKind,
    CoefficientSequence,
    KernelSpec,
    evaluate,
    evaluate_many,
    min_pole_modulus,
    poles_near,
)
from merozero.analysis.nevanlinna import convergence_index
from merozero.analysis.power_sums import (
    first_admissible_order,
    pole_power_sum,
    weighted_power_sum,
)
from merozero.analysis.series_calculus import logderiv_coeffs, logderiv_values, taylor_coeffs
from merozero.base import (
    EPS,
    ConvergenceError,
    ExponentBelowConvergenceIndex,
    HypothesisViolated,
    InsufficientDataError,
    SpecValidationError,
    TruncationPolicy,
    ValueWithError,
    ZeroConstantTermError,
)

DEFAULT_N_MAX = 16
SAMPLE_POINTS = 16
MAX_RESAMPLES = 3
MAX_MOMENT_LENGTH = 10_000
MAX_FAMILY_ORDER = 12
MIN_FAMILY_SAMPLES = 5


class Decision(Enum):
    HAS_ZEROS = "has-zeros-certified"
    CANDIDATE_ZERO_FREE = "candidate-zero-free"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ResidualReport:
    residuals: Mapping[int, ValueWithError]
    n_range: Tuple[int, int]
    decision: Decision
    witness: Optional[int] = None


def residuals(
    spec: KernelSpec,
    n_max: int = DEFAULT_N_MAX,
    rho_estimate: Optional[float] = None,
    policy: Optional[TruncationPolicy] = None,
    tolerance: float = 1e-9,
) -> ResidualReport:
    """r_N for every integer N in (rho - 1, n_max], with a decision."""
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    if rho_estimate is None:
        rho_estimate = convergence_index(spec.poles)
    n_min = first_admissible_order(rho_estimate)
    if n_min > n_max:
        logging.info(f"No admissible N in ({rho_estimate - 1:g}, {n_max}]")
        return ResidualReport({}, (n_min, n_max), Decision.INCONCLUSIVE)

    b = logderiv_coeffs(taylor_coeffs(spec, n_max + 1, policy), n_max)
    values = {}
    for N in range(n_min, n_max + 1):
        try:
            pole_sum = pole_power_sum(spec, N + 1, policy)
        except ExponentBelowConvergenceIndex as error:
            logging.warning(f"r_{N} skipped: {error}")
            continue
        values[N] = pole_sum.scaled(spec.kernel_order) - b[N]

    witness = next((N for N, r in values.items() if r.exceeds_bound()), None)
    # b_N vanishes for symmetric pole sets; |t_min|^-(N+1) sizes the pole sum instead
    nearest = min_pole_modulus(spec)
    if witness is not None:
        decision = Decision.HAS_ZEROS
    elif values and all(
        r.error_bound <= tolerance * (1 + abs(b[N].value) + nearest ** -(N + 1))
        for N, r in values.items()
    ):
        decision = Decision.CANDIDATE_ZERO_FREE
    else:
        decision = Decision.INCONCLUSIVE
    logging.info(f"Criterion over N={n_min}..{n_max}: {decision.value} (witness {witness})")
    return ResidualReport(values, (n_min, n_max), decision, witness)


class MomentCheck(NamedTuple):
    all_zero: bool
    witness: Optional[int]
    power_sums: Tuple
    elementary: Tuple
    radius_bound: float


def _is_exact(values: Sequence) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in values)


def _newton_elementary(power_sums: Sequence, zero, one) -> List:
    """e_1..e_n from p_1..p_n: k e_k = sum_{i<=k} (-1)^(i-1) e_{k-i} p_i."""
    elementary = [one]
    for k in range(1, len(power_sums) + 1):
        total = zero
        for i in range(1, k + 1):
            total += (-1) ** (i - 1) * elementary[k - i] * power_sums[i - 1]
        elementary.append(total / k)
    return elementary[1:]


def newton_moment_check(a: Sequence, tolerance: float = 1e-12) -> MomentCheck:
    """Power sums p_1..p_n of a; the first N with p_N != 0 witnesses a nonzero entry.

    Integer and Fraction inputs are handled exactly.
    """
    n = len(a)
    if n > MAX_MOMENT_LENGTH:
        raise ValueError(f"At most {MAX_MOMENT_LENGTH} values, got {n}")
    if n == 0:
        return MomentCheck(True, None, (), (), 0.0)

    if _is_exact(a):
        values = [Fraction(v) for v in a]
        powers = list(values)
        power_sums = []
        for N in range(1, n + 1):
            p = sum(powers, Fraction(0))
            power_sums.append(p)
            if p != 0:
                return MomentCheck(False, N, tuple(power_sums), (), math.inf)
            powers = [x * v for x, v in zip(powers, values)]
        elementary = _newton_elementary(power_sums, Fraction(0), Fraction(1))
        return MomentCheck(True, None, tuple(power_sums), tuple(elementary), 0.0)

    values = np.asarray(a, dtype=complex)
    powers = values.copy()
    power_sums = []
    with np.errstate(over="ignore", invalid="ignore"):
        for N in range(1, n + 1):
            p = complex(powers.sum())
            power_sums.append(p)
            if not cmath.isfinite(p) or abs(p) > tolerance:
                return MomentCheck(False, N, tuple(power_sums), (), math.inf)
            powers *= values
    elementary = _newton_elementary(power_sums, 0j, 1 + 0j)
    radius = 2 * max(abs(e) ** (1.0 / k) for k, e in enumerate(elementary, start=1))
    return MomentCheck(True, None, tuple(power_sums), tuple(elementary), radius)


class Verdict(Enum):
    MATCHES_CAUCHY = "matches-cauchy"
    MATCHES_SQUARED_CAUCHY = "matches-squared-cauchy"
    MATCHES_SINE = "matches-sine-squared"
    NOT_ZERO_FREE = "not-zero-free"
    INCONCLUSIVE = "inconclusive"


class Classification(NamedTuple):
    verdict: Verdict
    parameter: Optional[complex]
    max_residual: float
    residual_bound: float


def _classifier_preconditions(spec: KernelSpec, kernel_order: int) -> float:
    if spec.kernel_order != kernel_order:
        raise HypothesisViolated(f"Classifier needs kernel_order {kernel_order}")
    if not spec.has_unit_weights():
        raise HypothesisViolated("Classifier needs unit coefficients c_k = 1")
    index = convergence_index(spec.poles)
    if not index < kernel_order:
        raise HypothesisViolated(
            f"Convergence index {index:g} of the poles is not below {kernel_order}"
        )
    return index


def _ode_residual(spec: KernelSpec, policy: TruncationPolicy, residual_fn, derivatives: int):
    """Largest residual excess over the sampled circle |z| = min|t_k| / 2."""
    radius = min_pole_modulus(spec) / 2
    for attempt in range(MAX_RESAMPLES + 1):
        phase = attempt * math.pi / (SAMPLE_POINTS * (MAX_RESAMPLES + 1))
        z = radius * np.exp(1j * (2 * math.pi * np.arange(SAMPLE_POINTS) / SAMPLE_POINTS + phase))
        samples = [evaluate_many(spec, z, policy, d) for d in range(derivatives + 1)]
        if np.any(np.abs(samples[0].values) <= samples[0].error_bounds):
            logging.info(f"Sample circle meets a zero of f, resampling ({attempt + 1})")
            continue
        return residual_fn(*samples)
    raise ConvergenceError("Sample points keep colliding with zeros of f")


def _unit_residual(f, fp):
    ratio = fp.values / f.values
    residual = f.values + ratio
    bound = (
        f.error_bounds
        + fp.error_bounds / np.abs(f.values)
        + np.abs(fp.values) * f.error_bounds / np.abs(f.values) ** 2
        + EPS * (np.abs(f.values) + np.abs(ratio))
    )
    scale = np.abs(f.values) + np.abs(ratio)
    return residual, bound, scale


def _squared_residual(g, gp, gpp):
    first = gp.values / g.values
    second = gpp.values / g.values
    residual = 2 * g.values - (second - first**2)
    inverse = 1 / np.abs(g.values)
    bound = (
        2 * g.error_bounds
        + gpp.error_bounds * inverse
        + np.abs(second) * g.error_bounds * inverse
        + 2 * np.abs(first) * (gp.error_bounds * inverse + np.abs(first) * g.error_bounds * inverse)
        + EPS * (2 * np.abs(g.values) + np.abs(second) + np.abs(first) ** 2)
    )
    scale = 2 * np.abs(g.values) + np.abs(second) + np.abs(first) ** 2
    return residual, bound, scale


def _classify(spec, policy, tolerance, kernel_order, residual_fn, derivatives, fit):
    policy = policy or TruncationPolicy()
    index = _classifier_preconditions(spec, kernel_order)
    residual, bound, scale = _ode_residual(spec, policy, residual_fn, derivatives)
    max_residual = float(np.abs(residual).max())
    passes = np.all(np.abs(residual) <= 2 * bound + tolerance * scale)
    if passes:
        verdict, parameter = fit()
        logging.info(f"ODE residual passes: {verdict.value} with parameter {parameter}")
        return Classification(verdict, parameter, max_residual, float(bound.max()))
    report = residuals(spec, 8, index, policy)
    verdict = (
        Verdict.NOT_ZERO_FREE if report.decision is Decision.HAS_ZEROS else Verdict.INCONCLUSIVE
    )
    logging.info(f"ODE residual {max_residual:.3g} fails: {verdict.value}")
    return Classification(verdict, None, max_residual, float(bound.max()))


def classify_unit_weight(
    spec: KernelSpec, policy: Optional[TruncationPolicy] = None, tolerance: float = 1e-9
) -> Classification:
    """Checks f + f'/f = 0, whose solutions among these sums are 1/(z - C)."""

    def fit():
        return Verdict.MATCHES_CAUCHY, -1 / evaluate(spec, 0.0, policy).value

    return _classify(spec, policy, tolerance, 1, _unit_residual, 1, fit)


def classify_squared(
    spec: KernelSpec, policy: Optional[TruncationPolicy] = None, tolerance: float = 1e-9
) -> Classification:
    """Checks 2g - (g'/g)' = 0: 1/(z - C)^2 or pi^2 / sin^2(pi (z + b))."""

    def fit():
        if spec.is_finite and spec.term_count == 1:
            pole = spec.extra_terms[0].pole if spec.extra_terms else spec.poles.values[0]
            return Verdict.MATCHES_SQUARED_CAUCHY, pole
        if spec.is_finite:
            return Verdict.INCONCLUSIVE, None
        nearest = min_pole_modulus(spec)
        pole, _ = poles_near(spec, 0.0, nearest * (1 + 1e-12))[0]
        return Verdict.MATCHES_SINE, complex((-pole.real) % 1.0, -pole.imag)

    return _classify(spec, policy, tolerance, 2, _squared_residual, 2, fit)


def mt_relation_residuals(
    spec: KernelSpec, policy: Optional[TruncationPolicy] = None
) -> List[ValueWithError]:
    """LHS - RHS of the criterion equations N = 0..3 written through M_l and T_l."""
    if spec.kernel_order != 1:
        raise SpecValidationError("The M/T relations are stated for kernel_order 1")
    M = {l: weighted_power_sum(spec, l, policy) for l in range(1, 6)}
    T = {l: pole_power_sum(spec, l, policy) for l in range(1, 5)}
    M1 = M[1]
    if not M1.exceeds_bound():
        raise ZeroConstantTermError(f"M_1 = {M1.value} is within its error bound of zero")
    M1_2 = M1 * M1
    M1_3 = M1_2 * M1
    relations = [
        M[2] / M1 - T[1],
        (M1 * M[3]).scaled(2) - M[2] * M[2],
        (M1_2 * M[4]).scaled(3) - (M1 * M[2] * M[3]).scaled(3) + M[2] * M[2] * M[2],
        (M1_3 * M[5]).scaled(4)
        - (M1_2 * M[2] * M[4]).scaled(4)
        - (M1_2 * M[3] * M[3]).scaled(2)
        + (M1 * M[2] * M[2] * M[3]).scaled(4)
        - M[2] * M[2] * M[2] * M[2],
    ]
    relations[1] = relations[1] / M1_2 - T[2]
    relations[2] = relations[2] / M1_3 - T[3]
    relations[3] = relations[3] / (M1_3 * M1) - T[4]
    return relations


def implied_pole_sums(M: Sequence[complex], count: int) -> np.ndarray:
    """T_1..T_count forced by the criterion for weighted sums M_1, M_2, ..."""
    a = -np.asarray(M, dtype=complex)
    return logderiv_values(a[: count + 1], count - 1)


class FamilyVariation(NamedTuple):
    orders: Tuple[int, ...]
    residuals: np.ndarray


def family_variation_residual(M, T, step: float) -> FamilyVariation:
    """Residual of dM_l = M_{l-1} dM_2 + sum_{j=2}^{l-1} M_{l-j} dT_j / j for l = 3..L.

    M holds M_1..M_L (M_1 = 1) and T holds T_2..T_{L-1}, one row per equally spaced sample.
    Derivatives are central differences; residuals are reported at interior samples.
    """
    M = np.asarray(M, dtype=complex)
    T = np.asarray(T, dtype=complex)
    if M.ndim != 2 or M.shape[0] < MIN_FAMILY_SAMPLES:
        raise InsufficientDataError(f"Need at least {MIN_FAMILY_SAMPLES} samples of M")
    samples, L = M.shape
    if not 3 <= L <= MAX_FAMILY_ORDER:
        raise ValueError(f"L must lie in [3, {MAX_FAMILY_ORDER}], got {L}")
    if T.shape != (samples, L - 2):
        raise ValueError(f"T must have shape {(samples, L - 2)}, got {T.shape}")
    if np.max(np.abs(M[:, 0] - 1)) > 1e-9:
        raise ValueError("M_1 must equal 1 on every sample")
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")

    dM = np.gradient(M, step, axis=0)
    dT = np.gradient(T, step, axis=0)
    columns = []
    for l in range(3, L + 1):
        residual = dM[:, l - 1] - M[:, l - 2] * dM[:, 1]
        for j in range(2, l):
            residual = residual - M[:, l - j - 1] * dT[:, j - 2] / j
        columns.append(residual[1:-1])
    return FamilyVariation(tuple(range(3, L + 1)), np.column_stack(columns))


def linear_weight(delta: float, k: int, coeff: complex) -> complex:
    return coeff * (1 + delta * k)


def weight_family_samples(
    spec: KernelSpec,
    deltas: Sequence[float],
    L: int,
    weight_fn: Callable[[float, int, complex], complex] = linear_weight,
    policy: Optional[TruncationPolicy] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Normalised M_1..M_L and fixed-pole T_2..T_{L-1} along a coefficient family c_k(delta)."""
    if not spec.is_finite or spec.extra_terms or spec.kernel_order != 1:
        raise SpecValidationError("Weight families need a single explicit list with kernel_order 1")
    rows_M, rows_T = [], []
    T = [pole_power_sum(spec, j, policy).value for j in range(2, L)]
    for delta in deltas:
        coeffs = tuple(
            weight_fn(delta, k, c) for k, c in enumerate(spec.coeffs.values, start=1)
        )
        member = KernelSpec(
            spec.poles, CoefficientSequence(CoefficientKind.LIST, values=coeffs), 1
        )
        M = np.array([weighted_power_sum(member, l, policy).value for l in range(1, L + 1)])
        if M[0] == 0:
            raise ZeroConstantTermError(f"M_1 vanishes at delta={delta}")
        rows_M.append(M / M[0])
        rows_T.append(T)
    return np.array(rows_M), np.array(rows_T, dtype=complex)
