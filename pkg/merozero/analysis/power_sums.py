"""
Pole power sums and power sums of zeros.

T_l = sum_k t_k^-l and M_l = sum_k c_k t_k^-l feed the formula
sum_k s_k^-(N+1) = T_{N+1} - b_N, with b_N the N-th Taylor coefficient of f'/f, and its variants
for the squared kernel and for the zeros of f'.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Mapping, Optional, Tuple

from merozero.analysis.kernel_model import KernelSpec, PoleKind, check_hypotheses, power_sum
from merozero.analysis.nevanlinna import convergence_index
from merozero.analysis.series_calculus import (
    LogDerivKind,
    logderiv_coeffs,
    second_logderiv_coeffs,
    taylor_coeffs,
)
from merozero.base import (
    ExponentBelowConvergenceIndex,
    HypothesisViolated,
    SpecValidationError,
    TruncationPolicy,
    ValueWithError,
)


class Flavor(Enum):
    T = "T"
    M = "M"


class ZeroTarget(Enum):
    F = "zeros-of-f"
    FPRIME = "zeros-of-f'"


class Route(Enum):
    VIA_POLES = "via-poles"
    VIA_ZEROS = "via-zeros"


def first_admissible_order(rho_estimate: float) -> int:
    """Smallest integer N with N > rho - 1."""
    return max(0, math.floor(rho_estimate - 1) + 1)


def check_order_hypothesis(N: int, rho_estimate: float):
    if N < 0 or not N > rho_estimate - 1:
        raise HypothesisViolated(f"N={N} does not satisfy N > rho - 1 with rho={rho_estimate:g}")


@dataclass(frozen=True)
class PowerSumTable:
    entries: Mapping[int, ValueWithError]
    flavor: Flavor
    unavailable: Tuple[int, ...] = ()

    def __post_init__(self):
        if any(l < 1 for l in self.entries):
            raise ValueError("Power sum exponents start at 1")


@dataclass(frozen=True)
class ZeroPowerSums:
    entries: Mapping[int, ValueWithError]
    target: ZeroTarget
    rho_estimate: float
    skipped: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        for N in self.entries:
            check_order_hypothesis(N, self.rho_estimate)


def _check_exponent(spec: KernelSpec, l: int) -> bool:
    """True when the sum over t_k^-l needs the canonical order (symmetric lattice pairs)."""
    if l < 1:
        raise ValueError(f"Exponent must be positive, got {l}")
    if spec.is_finite:
        return False
    index = convergence_index(spec.poles)
    if l > index:
        return False
    if spec.poles.kind is PoleKind.LATTICE:
        logging.info(f"Exponent {l} summed in symmetric lattice order")
        return True
    raise ExponentBelowConvergenceIndex(
        f"Exponent {l} does not exceed the convergence index {index:g} of the poles"
    )


def pole_power_sum(
    spec: KernelSpec, l: int, policy: Optional[TruncationPolicy] = None
) -> ValueWithError:
    """T_l over every listed pole, explicit terms included."""
    order_dependent = _check_exponent(spec, l)
    value = power_sum(spec, l, policy, unit_weights=True)
    return ValueWithError(value.value, value.error_bound, order_dependent)


def weighted_power_sum(
    spec: KernelSpec, l: int, policy: Optional[TruncationPolicy] = None
) -> ValueWithError:
    """M_l = sum_k c_k t_k^-l."""
    order_dependent = _check_exponent(spec, l)
    value = power_sum(spec, l, policy)
    return ValueWithError(value.value, value.error_bound, order_dependent)


def power_sum_table(
    spec: KernelSpec,
    exponents: Iterable[int],
    flavor: Flavor = Flavor.T,
    policy: Optional[TruncationPolicy] = None,
) -> PowerSumTable:
    compute = pole_power_sum if flavor is Flavor.T else weighted_power_sum
    entries: Dict[int, ValueWithError] = {}
    unavailable = []
    for l in exponents:
        try:
            entries[l] = compute(spec, l, policy)
        except ExponentBelowConvergenceIndex:
            unavailable.append(l)
    return PowerSumTable(entries, flavor, tuple(unavailable))


def _require_order(spec: KernelSpec, kernel_order: int, operation: str):
    if spec.kernel_order != kernel_order:
        raise SpecValidationError(f"{operation} needs kernel_order {kernel_order}")


def zero_power_sum(
    spec: KernelSpec, N: int, rho_estimate: float, policy: Optional[TruncationPolicy] = None
) -> ValueWithError:
    """sum over the zeros s of f of s^-(N+1), as T_{N+1} - b_N."""
    _require_order(spec, 1, "zero_power_sum")
    check_order_hypothesis(N, rho_estimate)
    check_hypotheses(spec, policy)
    b = logderiv_coeffs(taylor_coeffs(spec, N + 1, policy), N)
    return pole_power_sum(spec, N + 1, policy) - b[N]


def zero_power_sum_squared(
    spec: KernelSpec, N: int, rho_estimate: float, policy: Optional[TruncationPolicy] = None
) -> ValueWithError:
    """sum over the zeros u of g of u^-(N+1), as 2 T_{N+1} - b_N(g'/g)."""
    _require_order(spec, 2, "zero_power_sum_squared")
    check_order_hypothesis(N, rho_estimate)
    check_hypotheses(spec, policy)
    b = logderiv_coeffs(taylor_coeffs(spec, N + 1, policy), N)
    return pole_power_sum(spec, N + 1, policy).scaled(2) - b[N]


def fprime_zero_power_sum(
    spec: KernelSpec,
    N: int,
    rho_estimate: float,
    policy: Optional[TruncationPolicy] = None,
    route: Route = Route.VIA_POLES,
) -> ValueWithError:
    """sum over the zeros u of f' of u^-(N+1).

    via-poles: 2 T_{N+1} - b_N(f''/f'). via-zeros: 2 sum s^-(N+1) - b_N(f''/f' - 2f'/f).
    """
    _require_order(spec, 1, "fprime_zero_power_sum")
    check_order_hypothesis(N, rho_estimate)
    check_hypotheses(spec, policy)
    if Route(route) is Route.VIA_POLES:
        b = second_logderiv_coeffs(spec, N, policy, LogDerivKind.FPRIME)
        return pole_power_sum(spec, N + 1, policy).scaled(2) - b[N]
    b = second_logderiv_coeffs(spec, N, policy, LogDerivKind.COMBINED)
    return zero_power_sum(spec, N, rho_estimate, policy).scaled(2) - b[N]


def zero_power_sums(
    spec: KernelSpec,
    n_max: int,
    rho_estimate: float,
    policy: Optional[TruncationPolicy] = None,
    target: ZeroTarget = ZeroTarget.F,
) -> ZeroPowerSums:
    """Table of zero power sums for every admissible N up to n_max."""
    if spec.kernel_order == 2 and target is ZeroTarget.FPRIME:
        raise SpecValidationError("Zeros of the derivative are tabulated for kernel_order 1 only")
    entries: Dict[int, ValueWithError] = {}
    skipped = []
    for N in range(first_admissible_order(rho_estimate), n_max + 1):
        try:
            if target is ZeroTarget.FPRIME:
                entries[N] = fprime_zero_power_sum(spec, N, rho_estimate, policy)
            elif spec.kernel_order == 1:
                entries[N] = zero_power_sum(spec, N, rho_estimate, policy)
            else:
                entries[N] = zero_power_sum_squared(spec, N, rho_estimate, policy)
        except (ExponentBelowConvergenceIndex, ZeroDivisionError) as error:
            logging.warning(f"{target.value} N={N} unavailable: {error}")
            skipped.append(N)
    return ZeroPowerSums(entries, target, rho_estimate, tuple(skipped))
