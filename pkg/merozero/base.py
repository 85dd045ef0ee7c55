"""
merozero base module.

Shared records, the error hierarchy and the truncation policy used by every analysis module.
"""

import cmath
import logging
import math
import os
from dataclasses import dataclass, replace
from enum import Enum
from numbers import Number
from typing import Optional, Union

import numpy as np
from dotenv import load_dotenv

NAME = "merozero"

EPS = float(np.finfo(float).eps)

DEFAULT_MAX_TERMS = 1 << 20
DEFAULT_TARGET_TAIL = 1e-12
DEFAULT_MAX_DERIVATIVE = 12


class MerozeroError(Exception):
    """Base class for every error raised by merozero."""


class SpecValidationError(MerozeroError, ValueError):
    pass


class HypothesisViolated(SpecValidationError):
    pass


class IndexOverflowError(MerozeroError, IndexError):
    pass


class PoleProximityError(MerozeroError, ValueError):
    pass


class ExponentBelowConvergenceIndex(MerozeroError, ValueError):
    pass


class ZeroConstantTermError(MerozeroError, ZeroDivisionError):
    pass


class ConvergenceError(MerozeroError, ArithmeticError):
    pass


class InsufficientDataError(MerozeroError, ValueError):
    pass


Scalar = Union[complex, float, int]


@dataclass(frozen=True)
class ValueWithError:
    """A complex value with an absolute bound on its error.

    Arithmetic propagates bounds to first order and adds one rounding unit per operation.
    """

    value: complex
    error_bound: float = 0.0
    order_dependent: bool = False

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))
        object.__setattr__(self, "error_bound", float(self.error_bound))
        if not cmath.isfinite(self.value):
            raise ConvergenceError(f"Non-finite value {self.value}")
        if not (math.isfinite(self.error_bound) and self.error_bound >= 0.0):
            raise ConvergenceError(f"Invalid error bound {self.error_bound}")

    @staticmethod
    def coerce(other: Union["ValueWithError", Scalar]) -> "ValueWithError":
        if isinstance(other, ValueWithError):
            return other
        if isinstance(other, Number):
            return ValueWithError(complex(other))
        return NotImplemented

    def _combine(self, other, value: complex, bound: float) -> "ValueWithError":
        return ValueWithError(
            value,
            bound + EPS * abs(value),
            self.order_dependent or other.order_dependent,
        )

    def __add__(self, other):
        other = ValueWithError.coerce(other)
        if other is NotImplemented:
            return other
        return self._combine(
            other, self.value + other.value, self.error_bound + other.error_bound
        )

    __radd__ = __add__

    def __neg__(self):
        return ValueWithError(-self.value, self.error_bound, self.order_dependent)

    def __sub__(self, other):
        other = ValueWithError.coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = ValueWithError.coerce(other)
        if other is NotImplemented:
            return other
        bound = (
            abs(self.value) * other.error_bound
            + abs(other.value) * self.error_bound
            + self.error_bound * other.error_bound
        )
        return self._combine(other, self.value * other.value, bound)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = ValueWithError.coerce(other)
        if other is NotImplemented:
            return other
        denominator = abs(other.value) - other.error_bound
        if denominator <= 0.0:
            raise ZeroConstantTermError(
                f"Divisor {other.value} is not distinguishable from zero"
                f" (bound {other.error_bound})"
            )
        value = self.value / other.value
        bound = (self.error_bound + abs(value) * other.error_bound) / denominator
        return self._combine(other, value, bound)

    def __rtruediv__(self, other):
        return ValueWithError.coerce(other) / self

    def scaled(self, factor: Scalar) -> "ValueWithError":
        value = self.value * factor
        return ValueWithError(
            value, self.error_bound * abs(factor) + EPS * abs(value), self.order_dependent
        )

    def exceeds_bound(self) -> bool:
        """True when the value is certified nonzero."""
        return abs(self.value) > self.error_bound

    def as_pair(self):
        return [self.value.real, self.value.imag]


class TruncationMethod(Enum):
    ZETA_TAIL = "zeta-tail"
    INTEGRAL_BOUND = "integral-bound"
    GEOMETRIC_BOUND = "geometric-bound"


@dataclass(frozen=True)
class TruncationPolicy:
    """How infinite sums are cut off.

    ``target_tail`` bounds the truncation part of every sum; rounding is reported on top.
    """

    max_terms: int = DEFAULT_MAX_TERMS
    target_tail: float = DEFAULT_TARGET_TAIL
    method: TruncationMethod = TruncationMethod.ZETA_TAIL
    max_derivative: int = DEFAULT_MAX_DERIVATIVE

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be positive, got {self.max_terms}")
        if not (self.target_tail > 0.0 and math.isfinite(self.target_tail)):
            raise ValueError(f"target_tail must be positive, got {self.target_tail}")
        if self.max_derivative < 0:
            raise ValueError(f"max_derivative must be non-negative, got {self.max_derivative}")
        if not isinstance(self.method, TruncationMethod):
            object.__setattr__(self, "method", TruncationMethod(self.method))

    def tightened(self, factor: float) -> "TruncationPolicy":
        return replace(self, target_tail=self.target_tail * factor)

    @classmethod
    def from_env(cls, env_file: Optional[str] = None, **overrides) -> "TruncationPolicy":
        load_dotenv(env_file)
        settings = dict(
            max_terms=_env_setting("MEROZERO_MAX_TERMS", int, DEFAULT_MAX_TERMS),
            target_tail=_env_setting("MEROZERO_TARGET_TAIL", float, DEFAULT_TARGET_TAIL),
            method=_env_setting("MEROZERO_METHOD", TruncationMethod, TruncationMethod.ZETA_TAIL),
        )
        settings.update(overrides)
        policy = cls(**settings)
        logging.debug(f"Truncation policy: {policy}")
        return policy


def _env_setting(variable: str, parse, default):
    raw = os.getenv(variable)
    if raw is None or raw.strip() == "":
        return default
    try:
        return parse(raw.strip())
    except ValueError:
        raise ValueError(f"Invalid value {raw!r} for {variable}")
