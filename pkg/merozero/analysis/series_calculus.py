"""
Taylor coefficients at the origin.

Coefficients of f come from weighted pole power sums; coefficients of the logarithmic derivatives
f'/f, f''/f' and f''/f' - 2f'/f come from the convolution recurrence
(n + 1) a_{n+1} = sum_{j<=n} b_j a_{n-j}, never from numerical differentiation.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from merozero.analysis.kernel_model import KernelSpec, power_sum
from merozero.base import EPS, TruncationPolicy, ValueWithError, ZeroConstantTermError

MAX_ORDER = 64
SAFETY_FACTOR = 4.0


class LogDerivKind(Enum):
    F = "f'/f"
    FPRIME = "f''/f'"
    COMBINED = "f''/f' - 2f'/f"


@dataclass(frozen=True)
class TaylorCoeffs:
    """a_n ~ f^(n)(0)/n!, base point 0."""

    coeffs: Tuple[ValueWithError, ...]

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, n):
        return self.coeffs[n]

    def values(self) -> np.ndarray:
        return np.array([c.value for c in self.coeffs], dtype=complex)

    def derivative(self) -> "TaylorCoeffs":
        """Coefficients of f': (n + 1) a_{n+1}."""
        return TaylorCoeffs(
            tuple(c.scaled(n) for n, c in enumerate(self.coeffs) if n > 0)
        )


@dataclass(frozen=True)
class LogDerivCoeffs:
    coeffs: Tuple[ValueWithError, ...]
    which: LogDerivKind = LogDerivKind.F

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, n):
        return self.coeffs[n]


def taylor_coeffs(
    spec: KernelSpec, n_max: int, policy: Optional[TruncationPolicy] = None
) -> TaylorCoeffs:
    """a_0..a_{n_max}: a_n = -M_{n+1} for m = 1 and (n + 1) M_{n+2} for m = 2.

    The tail target for a_n is target_tail * 2^-n.
    """
    policy = policy or TruncationPolicy()
    if not 0 <= n_max <= MAX_ORDER:
        raise ValueError(f"n_max must lie in [0, {MAX_ORDER}], got {n_max}")
    coeffs = []
    for n in range(n_max + 1):
        scaled_policy = policy.tightened(2.0**-n)
        if spec.kernel_order == 1:
            coeffs.append(-power_sum(spec, n + 1, scaled_policy))
        else:
            moment = power_sum(spec, n + 2, scaled_policy.tightened(1.0 / (n + 1)))
            coeffs.append(moment.scaled(n + 1))
    return TaylorCoeffs(tuple(coeffs))


def _recurrence(values: np.ndarray, errors: np.ndarray, n_max: int):
    a0 = values[0]
    denominator = abs(a0) - errors[0]
    b, db = [], []
    for n in range(n_max + 1):
        terms = [(n + 1) * values[n + 1]] + [-b[j] * values[n - j] for j in range(n)]
        bn = sum(terms) / a0
        sensitivity = (n + 1) * errors[n + 1] + sum(
            abs(b[j]) * errors[n - j] + db[j] * abs(values[n - j]) for j in range(n)
        )
        rounding = (n + 2) * EPS * sum(abs(t) for t in terms) / abs(a0)
        b.append(bn)
        db.append((sensitivity + abs(bn) * errors[0]) / denominator + rounding)
    return b, db


def logderiv_coeffs(a: TaylorCoeffs, n_max: int) -> LogDerivCoeffs:
    """b_0..b_{n_max} of f'/f from the Taylor coefficients of f."""
    if len(a) < n_max + 2:
        raise ValueError(f"Need {n_max + 2} Taylor coefficients, got {len(a)}")
    if not a[0].exceeds_bound():
        raise ZeroConstantTermError(
            f"a_0 = {a[0].value} is within its error bound {a[0].error_bound:.3g} of zero"
        )
    values = a.values()
    errors = np.array([c.error_bound for c in a.coeffs])
    order_dependent = any(c.order_dependent for c in a.coeffs[: n_max + 2])
    b, db = _recurrence(values, errors, n_max)
    return LogDerivCoeffs(
        tuple(
            ValueWithError(bn, SAFETY_FACTOR * dbn, order_dependent) for bn, dbn in zip(b, db)
        ),
        LogDerivKind.F,
    )


def logderiv_values(a: Sequence[complex], n_max: int) -> np.ndarray:
    """b_0..b_{n_max} for exact coefficient data, without error tracking."""
    values = np.asarray(a, dtype=complex)
    if values.size < n_max + 2:
        raise ValueError(f"Need {n_max + 2} Taylor coefficients, got {values.size}")
    if values[0] == 0:
        raise ZeroConstantTermError("a_0 = 0")
    b, _ = _recurrence(values, np.zeros(values.size), n_max)
    return np.array(b, dtype=complex)


def logderiv_from_spec(
    spec: KernelSpec, n_max: int, policy: Optional[TruncationPolicy] = None
) -> LogDerivCoeffs:
    return logderiv_coeffs(taylor_coeffs(spec, n_max + 1, policy), n_max)


def second_logderiv_coeffs(
    spec: KernelSpec,
    n_max: int,
    policy: Optional[TruncationPolicy] = None,
    which: LogDerivKind = LogDerivKind.FPRIME,
) -> LogDerivCoeffs:
    """Coefficients of f''/f' or of f''/f' - 2f'/f."""
    if which is LogDerivKind.F:
        raise ValueError("Use logderiv_coeffs for f'/f")
    a = taylor_coeffs(spec, n_max + 2, policy)
    derivative = a.derivative()
    if not derivative[0].exceeds_bound():
        raise ZeroConstantTermError(
            f"f'(0) = {derivative[0].value} is within its error bound of zero"
        )
    second = logderiv_coeffs(derivative, n_max)
    if which is LogDerivKind.FPRIME:
        return LogDerivCoeffs(second.coeffs, LogDerivKind.FPRIME)
    first = logderiv_coeffs(a, n_max)
    combined = tuple(s - f.scaled(2) for s, f in zip(second.coeffs, first.coeffs))
    logging.debug(f"Combined log-derivative coefficients up to N={n_max}")
    return LogDerivCoeffs(combined, LogDerivKind.COMBINED)


def compose_from_logderiv(a0: complex, b: Sequence[complex]) -> np.ndarray:
    """Rebuild a_0..a_{len(b)} from a_0 and the f'/f coefficients."""
    a = [complex(a0)]
    for n in range(len(b)):
        a.append(sum(b[j] * a[n - j] for j in range(n + 1)) / (n + 1))
    return np.array(a, dtype=complex)


def hadamard_polynomial_derivative(
    spec: KernelSpec, p: int, policy: Optional[TruncationPolicy] = None
) -> Tuple[ValueWithError, ...]:
    """Ascending coefficients of P' in f'/f = P'(z) + z^p (zero and pole sums).

    They are the first p coefficients of f'/f.
    """
    if p < 0:
        raise ValueError(f"p must be non-negative, got {p}")
    if p == 0:
        return ()
    return logderiv_from_spec(spec, p - 1, policy).coeffs[:p]
