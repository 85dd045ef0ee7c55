"""
Cauchy-kernel sums.

A ``KernelSpec`` describes f(z) = sum_k c_k / (z - t_k)^m for a pole family {t_k} and a
coefficient family {c_k}. ``kernel_sum`` evaluates the shifted sums sum_k c_k (z - t_k)^(-s) that
the rest of the package is built on: f, its derivatives and the weighted pole power sums at 0.

Infinite families are cut after K terms. With the ``zeta-tail`` method the dropped tail is summed
as an expansion in powers of (z - b)/(a k^p) whose moments are Hurwitz zeta or Lerch values, and
only the remainder of that expansion is bounded.
"""

import argparse
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import mpmath
import numpy as np

from merozero.base import (
    EPS,
    ConvergenceError,
    HypothesisViolated,
    IndexOverflowError,
    PoleProximityError,
    SpecValidationError,
    TruncationMethod,
    TruncationPolicy,
    ValueWithError,
)

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"

PROXIMITY_FACTOR = 10.0
MIN_HEAD_TERMS = 16
MIN_LATTICE_PAIRS = 8
MAX_EXPANSION_TERMS = 60
CHUNK_ENTRIES = 1 << 20
MOMENT_DPS = 30


class PoleKind(Enum):
    LIST = "list"
    POWER = "power"
    LATTICE = "lattice"


class CoefficientKind(Enum):
    LIST = "list"
    CONSTANT = "constant"
    ALTERNATING = "alternating"
    DECAYING = "decaying"


def lattice_integers(k) -> np.ndarray:
    """Integers 0, 1, -1, 2, -2, ... at 1-based positions k."""
    k = np.asarray(k, dtype=np.int64)
    half = k // 2
    return np.where(k % 2 == 0, half, -half).astype(float)


def _finite_complex(value, where: str) -> complex:
    value = complex(value)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise SpecValidationError(f"{where} must be finite, got {value}")
    return value


def _too_close(z: complex, t: complex) -> bool:
    return abs(z - t) <= PROXIMITY_FACTOR * EPS * max(1.0, abs(t))


@dataclass(frozen=True)
class PoleSequence:
    """Poles t_k, k = 1, 2, ...

    ``power``: t_k = a k^p + b. ``lattice``: t_k runs over n + offset, n = 0, 1, -1, 2, -2, ...
    """

    kind: PoleKind
    values: Tuple[complex, ...] = ()
    a: complex = 1.0
    p: float = 1.0
    b: complex = 0.0
    offset: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PoleKind(self.kind))
        object.__setattr__(
            self, "values", tuple(_finite_complex(v, "pole") for v in self.values)
        )
        for name in ("a", "b", "offset"):
            object.__setattr__(self, name, _finite_complex(getattr(self, name), name))
        object.__setattr__(self, "p", float(self.p))

        if self.kind is PoleKind.LIST:
            if not self.values:
                raise SpecValidationError("An explicit pole list needs at least one pole")
            for index, value in enumerate(self.values, start=1):
                if _too_close(0j, value):
                    raise SpecValidationError(f"Pole t_{index} is zero")
        elif self.kind is PoleKind.POWER:
            if self.a == 0:
                raise SpecValidationError("Power family needs a != 0")
            if not (self.p > 0 and math.isfinite(self.p)):
                raise SpecValidationError(f"Power family needs p > 0, got {self.p}")
            root = (abs(self.b) / abs(self.a)) ** (1.0 / self.p)
            for k in {max(1, math.floor(root)), max(1, math.ceil(root))}:
                if _too_close(0j, complex(self.at([k])[0])):
                    raise SpecValidationError(f"Pole t_{k} of the power family is zero")
        else:
            n = round(-self.offset.real)
            if _too_close(0j, n + self.offset):
                raise SpecValidationError(f"Lattice offset {self.offset} puts a pole at zero")

    @property
    def is_finite(self) -> bool:
        return self.kind is PoleKind.LIST

    def at(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if self.kind is PoleKind.LIST:
            return np.asarray(self.values, dtype=complex)[k - 1]
        if self.kind is PoleKind.POWER:
            return self.a * k.astype(float) ** self.p + self.b
        return lattice_integers(k) + self.offset

    def monotone_index(self) -> int:
        """Index beyond which |t_k| is at least half of its leading term."""
        if self.kind is PoleKind.LIST:
            return len(self.values)
        if self.kind is PoleKind.POWER:
            return int(math.ceil((2.0 * abs(self.b) / abs(self.a)) ** (1.0 / self.p)))
        return 2 * int(math.ceil(2.0 * abs(self.offset))) + 1

    def indices_within(self, r: float) -> np.ndarray:
        """1-based indices covering every pole with |t_k| <= r."""
        if self.kind is PoleKind.LIST:
            return np.arange(1, len(self.values) + 1)
        if self.kind is PoleKind.POWER:
            kmax = int(math.floor(((r + abs(self.b)) / abs(self.a)) ** (1.0 / self.p))) + 1
        else:
            kmax = 2 * (int(math.floor(r + abs(self.offset))) + 1) + 1
        return np.arange(1, kmax + 1)


@dataclass(frozen=True)
class CoefficientSequence:
    """Coefficients c_k: an explicit list, kappa, kappa (-1)^k or kappa sigma^k k^-q."""

    kind: CoefficientKind
    values: Tuple[complex, ...] = ()
    value: complex = 1.0
    sigma: complex = 1.0
    q: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", CoefficientKind(self.kind))
        object.__setattr__(
            self, "values", tuple(_finite_complex(v, "coefficient") for v in self.values)
        )
        object.__setattr__(self, "value", _finite_complex(self.value, "value"))
        object.__setattr__(self, "sigma", _finite_complex(self.sigma, "sigma"))
        object.__setattr__(self, "q", float(self.q))
        if self.kind is CoefficientKind.LIST:
            if not self.values:
                raise SpecValidationError("An explicit coefficient list needs at least one value")
            return
        if self.value == 0:
            raise SpecValidationError(f"{self.kind.value} coefficients with kappa = 0 vanish")
        if self.kind is CoefficientKind.DECAYING:
            if not 0 < abs(self.sigma) <= 1:
                raise SpecValidationError(f"Decaying coefficients need 0 < |sigma| <= 1")
            if not (self.q >= 0 and math.isfinite(self.q)):
                raise SpecValidationError(f"Decaying coefficients need q >= 0, got {self.q}")

    def at(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if self.kind is CoefficientKind.LIST:
            return np.asarray(self.values, dtype=complex)[k - 1]
        if self.kind is CoefficientKind.CONSTANT:
            return np.full(k.shape, self.value, dtype=complex)
        if self.kind is CoefficientKind.ALTERNATING:
            return self.value * np.where(k % 2 == 0, 1.0, -1.0)
        return self.value * self.sigma ** k * k.astype(float) ** (-self.q)

    def envelope(self) -> Tuple[float, float, float]:
        """(|kappa|, |sigma|, q) with |c_k| <= |kappa| |sigma|^k k^-q."""
        if self.kind is CoefficientKind.LIST:
            return max(abs(v) for v in self.values), 1.0, 0.0
        if self.kind is CoefficientKind.DECAYING:
            return abs(self.value), abs(self.sigma), self.q
        return abs(self.value), 1.0, 0.0

    def is_unit(self) -> bool:
        if self.kind is CoefficientKind.LIST:
            return all(v == 1 for v in self.values)
        return self.kind is CoefficientKind.CONSTANT and self.value == 1


class KernelTerm(NamedTuple):
    pole: complex
    coeff: complex


@dataclass(frozen=True)
class KernelSpec:
    """f(z) = sum_k c_k / (z - t_k)^m, with optional explicit terms enumerated first.

    Explicit lists merge repeated poles (their coefficients add) and drop zero coefficients;
    ``source_indices`` keeps the 1-based positions of the retained entries.
    """

    poles: PoleSequence
    coeffs: CoefficientSequence
    kernel_order: int = 1
    extra_terms: Tuple[KernelTerm, ...] = ()
    source_indices: Tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.kernel_order not in (1, 2):
            raise SpecValidationError(f"kernel_order must be 1 or 2, got {self.kernel_order}")
        extras = []
        for pole, coeff in self.extra_terms:
            term = KernelTerm(_finite_complex(pole, "pole"), _finite_complex(coeff, "coeff"))
            if _too_close(0j, term.pole):
                raise SpecValidationError("An extra term has its pole at zero")
            if term.coeff != 0:
                extras.append(term)
        object.__setattr__(self, "extra_terms", tuple(extras))

        if self.poles.is_finite:
            self._merge_explicit_terms()
        else:
            if self.coeffs.kind is CoefficientKind.LIST:
                raise SpecValidationError(
                    "Explicit coefficient lists pair only with explicit pole lists"
                )
            exponent = _tail_exponent(self.poles, self.coeffs, self.kernel_order)
            _, sigma, _ = self.coeffs.envelope()
            if sigma >= 1 and exponent <= 1:
                raise SpecValidationError(
                    f"sum |c_k|/|t_k|^{self.kernel_order} diverges (tail exponent {exponent:g})"
                )

    def _merge_explicit_terms(self):
        """Repeated poles collapse into one term whose coefficient is the sum.

        Pole power sums T_l then count each distinct pole once, so a unit-coefficient list with
        repeats has M_l != T_l: the merged coefficient weights M_l but not T_l.
        """
        poles = self.poles.values
        if self.coeffs.kind is CoefficientKind.LIST:
            if len(self.coeffs.values) != len(poles):
                raise SpecValidationError(
                    f"{len(poles)} poles but {len(self.coeffs.values)} coefficients"
                )
            coeffs = self.coeffs.values
        else:
            coeffs = tuple(complex(c) for c in self.coeffs.at(np.arange(1, len(poles) + 1)))

        merged: Dict[complex, List] = {}
        for index, (pole, coeff) in enumerate(zip(poles, coeffs), start=1):
            if pole in merged:
                merged[pole][0] += coeff
            else:
                merged[pole] = [coeff, index]
        kept = [(pole, c, index) for pole, (c, index) in merged.items() if c != 0]
        if not kept:
            raise SpecValidationError("Every coefficient of the pole list vanishes")
        if not self.source_indices or len(self.source_indices) != len(kept):
            object.__setattr__(self, "source_indices", tuple(index for _, _, index in kept))
        object.__setattr__(
            self, "poles", PoleSequence(PoleKind.LIST, values=tuple(p for p, _, _ in kept))
        )
        object.__setattr__(
            self,
            "coeffs",
            CoefficientSequence(CoefficientKind.LIST, values=tuple(c for _, c, _ in kept)),
        )

    @property
    def is_finite(self) -> bool:
        return self.poles.is_finite

    @property
    def term_count(self) -> Optional[int]:
        if not self.is_finite:
            return None
        return len(self.extra_terms) + len(self.poles.values)

    def has_unit_weights(self) -> bool:
        return self.coeffs.is_unit() and all(term.coeff == 1 for term in self.extra_terms)

    def with_kernel_order(self, kernel_order: int) -> "KernelSpec":
        return replace(self, kernel_order=kernel_order)


def _tail_exponent(poles: PoleSequence, coeffs: CoefficientSequence, s: float) -> float:
    """Exponent e with |c_k| |t_k|^-s <= C |sigma|^k k^-e for large k."""
    _, _, q = coeffs.envelope()
    if poles.kind is PoleKind.POWER:
        return q + poles.p * s
    return q + s


def _family_parts(
    spec: KernelSpec, unit_weights: bool
) -> Tuple[PoleSequence, CoefficientSequence, Tuple[KernelTerm, ...]]:
    if not unit_weights:
        return spec.poles, spec.coeffs, spec.extra_terms
    extras = tuple(KernelTerm(term.pole, 1.0) for term in spec.extra_terms)
    if spec.is_finite:
        ones = CoefficientSequence(CoefficientKind.LIST, values=(1.0,) * len(spec.poles.values))
        return spec.poles, ones, extras
    return spec.poles, CoefficientSequence(CoefficientKind.CONSTANT, value=1.0), extras


def expand_poles(
    spec: KernelSpec, K: int, policy: Optional[TruncationPolicy] = None
) -> List[KernelTerm]:
    """The first K (pole, coefficient) pairs in canonical order, explicit terms first."""
    policy = policy or TruncationPolicy()
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    if spec.is_finite:
        if K > spec.term_count:
            raise IndexOverflowError(f"K={K} exceeds the {spec.term_count} listed poles")
    elif K > policy.max_terms:
        raise IndexOverflowError(f"K={K} exceeds max_terms={policy.max_terms}")

    terms = list(spec.extra_terms[:K])
    rest = K - len(terms)
    if rest > 0:
        k = np.arange(1, rest + 1)
        terms.extend(
            KernelTerm(complex(t), complex(c))
            for t, c in zip(spec.poles.at(k), spec.coeffs.at(k))
        )
    return terms


def pole_moduli_within(spec: KernelSpec, r: float) -> np.ndarray:
    """|t| of every listed pole with |t| <= r (explicit terms included)."""
    moduli = [abs(term.pole) for term in spec.extra_terms]
    family = np.abs(spec.poles.at(spec.poles.indices_within(r)))
    moduli = np.concatenate([np.asarray(moduli, dtype=float), family])
    return np.sort(moduli[moduli <= r])


def poles_near(spec: KernelSpec, center: complex, radius: float) -> List[Tuple[complex, int]]:
    """Distinct poles within ``radius`` of ``center`` with their orders."""
    candidates = [term.pole for term in spec.extra_terms]
    indices = spec.poles.indices_within(abs(center) + radius)
    candidates.extend(complex(t) for t in spec.poles.at(indices))
    orders: Dict[complex, int] = {}
    for pole in candidates:
        if abs(pole - center) <= radius:
            orders[pole] = spec.kernel_order
    return sorted(orders.items(), key=lambda item: (item[0].real, item[0].imag))


def min_pole_modulus(spec: KernelSpec) -> float:
    first = spec.extra_terms[0].pole if spec.extra_terms else complex(spec.poles.at([1])[0])
    return float(pole_moduli_within(spec, abs(first)).min())


class KernelSum(NamedTuple):
    values: np.ndarray
    error_bounds: np.ndarray
    head_terms: int


def _head_sum(t: np.ndarray, c: np.ndarray, z: np.ndarray, s: int):
    values = np.empty(z.shape, dtype=complex)
    magnitudes = np.empty(z.shape, dtype=float)
    threshold = PROXIMITY_FACTOR * EPS * np.maximum(1.0, np.abs(t))
    rows = max(1, CHUNK_ENTRIES // max(1, t.size))
    for start in range(0, z.size, rows):
        block = z[start : start + rows, None] - t[None, :]
        if np.any(np.abs(block) <= threshold):
            raise PoleProximityError("Evaluation point within the proximity threshold of a pole")
        terms = c / block**s
        values[start : start + rows] = terms.sum(axis=1)
        magnitudes[start : start + rows] = np.abs(terms).sum(axis=1)
    rounding = (s + 2 + math.ceil(math.log2(t.size + 1))) * EPS * magnitudes
    return values, rounding


def _log_envelope_sum(sigma: float, e: float, K: int, method: TruncationMethod) -> float:
    """log of a bound on sum_{k>K} sigma^k k^-e (inf when no bound applies)."""
    geometric = integral = math.inf
    head = (K + 1) * math.log(sigma) if sigma < 1 else 0.0
    if sigma < 1 and e >= 0:
        geometric = head - e * math.log(K + 1) - math.log1p(-sigma)
    if e > 1:
        integral = head + (1 - e) * math.log(K) - math.log(e - 1)
    if method is TruncationMethod.INTEGRAL_BOUND:
        return integral if integral < math.inf else geometric
    if method is TruncationMethod.GEOMETRIC_BOUND:
        return geometric if geometric < math.inf else integral
    return min(geometric, integral)


def _alternating_zeta(e, a):
    # sum_{n>=0} (-1)^n (a + n)^-e
    two = mpmath.mpf(2)
    return two ** (-e) * (mpmath.zeta(e, a / two) - mpmath.zeta(e, (a + 1) / two))


@lru_cache(maxsize=8192)
def _scaled_moment(kind, value: complex, sigma: complex, q: float, e: float, K: int) -> complex:
    """(K+1)^e sum_{k>K} c_k k^-e for the closed-form coefficient kinds."""
    with mpmath.workdps(MOMENT_DPS):
        a = K + 1
        if kind is CoefficientKind.CONSTANT:
            total = mpmath.zeta(e, a)
        elif kind is CoefficientKind.ALTERNATING:
            total = (-1) ** a * _alternating_zeta(e, a)
        elif sigma == 1:
            total = mpmath.zeta(e + q, a)
        elif sigma == -1:
            total = (-1) ** a * _alternating_zeta(e + q, a)
        else:
            total = mpmath.mpc(sigma) ** a * mpmath.lerchphi(mpmath.mpc(sigma), e + q, a)
        return complex(mpmath.mpc(value) * total * mpmath.mpf(a) ** e)


def _lattice_bracket(kind: CoefficientKind, kappa: complex, s: int, j: int) -> complex:
    if kind is CoefficientKind.CONSTANT:
        return kappa * ((-1) ** s + (-1) ** j)
    return kappa * ((-1) ** s - (-1) ** j)


def _expansion_tail(poles, coeffs, z, s, K, policy):
    """Tail sum_{k>K} c_k (z - t_k)^-s by expansion, or None when unsupported."""
    power = poles.kind is PoleKind.POWER
    if power:
        centre, scale, exponent_step = poles.b, poles.a * (K + 1) ** poles.p, poles.p
    else:
        if coeffs.kind not in (CoefficientKind.CONSTANT, CoefficientKind.ALTERNATING):
            return None
        pairs = (K - 1) // 2
        centre, scale, exponent_step = poles.offset, complex(pairs + 1), 1.0
    w = z - centre
    x = np.abs(w) / abs(scale)
    if x.max() > 0.25:
        return None

    kappa_abs, sigma_abs, q = coeffs.envelope()
    log_w = np.log(np.maximum(np.abs(w), np.finfo(float).tiny))
    budget = 0.5 * policy.target_tail

    # remainder after J expansion terms
    def remainder(J: int) -> np.ndarray:
        damping = 1.0 / (1.0 - x.max() * (s + J) / (J + 1))
        log_binom = math.lgamma(s + J) - math.lgamma(J + 1) - math.lgamma(s)
        if power:
            log_rest = (
                J * log_w
                - (s + J) * math.log(abs(poles.a))
                + math.log(kappa_abs)
                + _log_envelope_sum(sigma_abs, q + poles.p * (s + J), K, policy.method)
            )
        else:
            log_rest = (
                J * log_w
                + math.log(2 * kappa_abs)
                + _log_envelope_sum(1.0, s + J, pairs, policy.method)
            )
        bound = damping * np.exp(log_binom + log_rest)
        return np.where(np.abs(w) == 0, 0.0, bound)

    J = max(s, 4)
    bounds = remainder(J)
    while bounds.max() > budget and J < MAX_EXPANSION_TERMS:
        J += 1
        bounds = remainder(J)

    ratio = w / scale
    values = np.zeros(z.shape, dtype=complex)
    magnitudes = np.zeros(z.shape, dtype=float)
    for j in range(J):
        binom = math.comb(s + j - 1, j)
        if power:
            moment = _scaled_moment(
                coeffs.kind, coeffs.value, coeffs.sigma, coeffs.q, exponent_step * (s + j), K
            )
            term = (-1) ** s * binom * moment * ratio**j
        else:
            bracket = _lattice_bracket(coeffs.kind, coeffs.value, s, j)
            if bracket == 0:
                continue
            if s + j <= 1:
                return None
            moment = _scaled_moment(CoefficientKind.CONSTANT, 1.0, 1.0, 0.0, float(s + j), pairs)
            term = binom * bracket * moment * ratio**j
        values += term
        magnitudes += np.abs(term)
    prefactor = scale ** (-s)
    values *= prefactor
    magnitudes *= abs(prefactor)
    logging.debug(f"Tail expansion s={s} K={K}: {J} terms, remainder {bounds.max():.3g}")
    return values, bounds + (J + 2) * EPS * magnitudes


def _dominated_tail(poles, coeffs, z, s, K, policy):
    """Zero estimate of the tail with a bound from the coefficient envelope."""
    kappa_abs, sigma_abs, q = coeffs.envelope()
    reach = float(np.abs(z).max())
    if poles.kind is PoleKind.POWER:
        if abs(poles.a) * (K + 1) ** poles.p < 2 * (abs(poles.b) + reach):
            return None
        log_bound = (
            math.log(kappa_abs)
            + s * math.log(2 / abs(poles.a))
            + _log_envelope_sum(sigma_abs, q + poles.p * s, K, policy.method)
        )
    else:
        pairs = (K - 1) // 2
        if pairs + 1 < 2 * (abs(poles.offset) + reach):
            return None
        log_bound = (
            math.log(2 * kappa_abs)
            + (s - q) * math.log(2)
            + _log_envelope_sum(sigma_abs**2, q + s, pairs, policy.method)
        )
    bound = math.exp(log_bound) if log_bound < 700 else math.inf
    return np.zeros(z.shape, dtype=complex), np.full(z.shape, bound)


def _initial_head(poles: PoleSequence, z: np.ndarray) -> int:
    reach = float(np.abs(z).max())
    if poles.kind is PoleKind.POWER:
        width = float(np.abs(z - poles.b).max())
        k = max(
            MIN_HEAD_TERMS,
            poles.monotone_index() + 1,
            math.ceil((4 * width / abs(poles.a)) ** (1.0 / poles.p)),
            math.ceil((2 * (abs(poles.b) + reach) / abs(poles.a)) ** (1.0 / poles.p)),
        )
        return 1 << (k - 1).bit_length()
    width = float(np.abs(z - poles.offset).max())
    pairs = max(
        MIN_LATTICE_PAIRS,
        math.ceil(4 * width),
        math.ceil(2 * (abs(poles.offset) + reach)),
    )
    return 2 * (1 << (pairs - 1).bit_length()) + 1


def _next_head(poles: PoleSequence, K: int) -> int:
    if poles.kind is PoleKind.POWER:
        return 2 * K
    return 2 * (K - 1) + 1


def _plan_tail(poles, coeffs, z, s, policy):
    _, sigma_abs, _ = coeffs.envelope()
    divergent = sigma_abs >= 1 and _tail_exponent(poles, coeffs, s) <= 1
    K = _initial_head(poles, z)
    while K <= policy.max_terms:
        tail = None
        if policy.method is TruncationMethod.ZETA_TAIL:
            tail = _expansion_tail(poles, coeffs, z, s, K, policy)
        if tail is None:
            if divergent:
                raise ConvergenceError(f"tail-not-convergent: no finite tail bound for s={s}")
            tail = _dominated_tail(poles, coeffs, z, s, K, policy)
        if tail is not None and tail[1].max() <= policy.target_tail:
            return K, tail
        K = _next_head(poles, K)
    raise ConvergenceError(
        f"tail-not-convergent: target {policy.target_tail:g} not reached within "
        f"{policy.max_terms} terms (s={s})"
    )


def kernel_sum(
    spec: KernelSpec,
    z,
    s: int,
    policy: Optional[TruncationPolicy] = None,
    unit_weights: bool = False,
) -> KernelSum:
    """sum_k c_k (z - t_k)^-s at every point of z, with per-point error bounds."""
    policy = policy or TruncationPolicy()
    z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
    poles, coeffs, extras = _family_parts(spec, unit_weights)
    values = np.zeros(z.shape, dtype=complex)
    bounds = np.zeros(z.shape, dtype=float)
    if extras:
        t = np.array([term.pole for term in extras], dtype=complex)
        c = np.array([term.coeff for term in extras], dtype=complex)
        head, rounding = _head_sum(t, c, z, s)
        values += head
        bounds += rounding

    if poles.is_finite:
        head, rounding = _head_sum(
            np.asarray(poles.values, dtype=complex), np.asarray(coeffs.values), z, s
        )
        return KernelSum(values + head, bounds + rounding, len(poles.values) + len(extras))

    K, (tail, tail_bounds) = _plan_tail(poles, coeffs, z, s, policy)
    k = np.arange(1, K + 1)
    head, rounding = _head_sum(poles.at(k), coeffs.at(k), z, s)
    values += head + tail
    bounds += rounding + tail_bounds + EPS * np.abs(values)
    logging.debug(f"Kernel sum s={s} over {z.size} points: head {K}, bound {bounds.max():.3g}")
    return KernelSum(values, bounds, K + len(extras))


def derivative_factor(kernel_order: int, d: int) -> int:
    """(-1)^d m (m+1) ... (m+d-1): d/dz^d of (z - t)^-m over (z - t)^-(m+d)."""
    return (-1) ** d * math.prod(range(kernel_order, kernel_order + d))


def evaluate_many(
    spec: KernelSpec, z, policy: Optional[TruncationPolicy] = None, d: int = 0
) -> KernelSum:
    """f^(d) at every point of z."""
    policy = policy or TruncationPolicy()
    if d < 0 or d > policy.max_derivative:
        raise ValueError(f"Derivative order {d} outside [0, {policy.max_derivative}]")
    factor = derivative_factor(spec.kernel_order, d)
    result = kernel_sum(spec, z, spec.kernel_order + d, policy.tightened(1.0 / abs(factor)))
    values = result.values * factor
    return KernelSum(
        values, result.error_bounds * abs(factor) + EPS * np.abs(values), result.head_terms
    )


def evaluate(
    spec: KernelSpec, z: complex, policy: Optional[TruncationPolicy] = None
) -> ValueWithError:
    result = evaluate_many(spec, [z], policy)
    return ValueWithError(result.values[0], result.error_bounds[0])


def evaluate_derivative(
    spec: KernelSpec, z: complex, d: int, policy: Optional[TruncationPolicy] = None
) -> ValueWithError:
    result = evaluate_many(spec, [z], policy, d)
    return ValueWithError(result.values[0], result.error_bounds[0])


def power_sum(
    spec: KernelSpec, l: int, policy: Optional[TruncationPolicy] = None, unit_weights: bool = False
) -> ValueWithError:
    """sum_k c_k t_k^-l (or sum_k t_k^-l with unit weights), explicit terms included."""
    result = kernel_sum(spec, [0.0], l, policy, unit_weights)
    return ValueWithError(result.values[0], result.error_bounds[0]).scaled((-1) ** l)


def check_hypotheses(spec: KernelSpec, policy: Optional[TruncationPolicy] = None) -> ValueWithError:
    """f(0), raising when it cannot be told apart from zero."""
    value = evaluate(spec, 0.0, policy)
    if not value.exceeds_bound():
        raise HypothesisViolated(
            f"f(0) = {value.value} is within its error bound {value.error_bound:.3g} of zero"
        )
    return value


def _complex_field(raw: Any, where: str) -> complex:
    if isinstance(raw, bool):
        raise SpecValidationError(f"{where}: expected a number or [re, im], got {raw!r}")
    if isinstance(raw, (int, float)):
        return _finite_complex(raw, where)
    if (
        isinstance(raw, list)
        and len(raw) == 2
        and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw)
    ):
        return _finite_complex(complex(raw[0], raw[1]), where)
    raise SpecValidationError(f"{where}: expected a number or [re, im], got {raw!r}")


def _real_field(raw: Any, where: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise SpecValidationError(f"{where}: expected a real number, got {raw!r}")
    return float(raw)


def _check_keys(doc: Any, where: str, required: Sequence[str], optional: Sequence[str] = ()):
    if not isinstance(doc, dict):
        raise SpecValidationError(f"{where}: expected an object, got {type(doc).__name__}")
    unknown = sorted(set(doc) - set(required) - set(optional))
    if unknown:
        raise SpecValidationError(f"{where}: unknown fields {unknown}")
    missing = [key for key in required if key not in doc]
    if missing:
        raise SpecValidationError(f"{where}: missing fields {missing}")


def _complex_list(raw: Any, where: str) -> Tuple[complex, ...]:
    if not isinstance(raw, list):
        raise SpecValidationError(f"{where}: expected a list")
    return tuple(_complex_field(item, f"{where}[{i}]") for i, item in enumerate(raw))


def _poles_from_dict(doc: Any) -> PoleSequence:
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "list":
        _check_keys(doc, "poles", ("kind", "values"))
        return PoleSequence(PoleKind.LIST, values=_complex_list(doc["values"], "poles.values"))
    if kind == "power":
        _check_keys(doc, "poles", ("kind", "a", "p"), ("b",))
        return PoleSequence(
            PoleKind.POWER,
            a=_complex_field(doc["a"], "poles.a"),
            p=_real_field(doc["p"], "poles.p"),
            b=_complex_field(doc.get("b", 0), "poles.b"),
        )
    if kind == "lattice":
        _check_keys(doc, "poles", ("kind", "offset"))
        return PoleSequence(PoleKind.LATTICE, offset=_complex_field(doc["offset"], "poles.offset"))
    raise SpecValidationError(f"poles: unknown kind {kind!r}")


def _coeffs_from_dict(doc: Any) -> CoefficientSequence:
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "list":
        _check_keys(doc, "coeffs", ("kind", "values"))
        return CoefficientSequence(
            CoefficientKind.LIST, values=_complex_list(doc["values"], "coeffs.values")
        )
    if kind in ("constant", "alternating"):
        _check_keys(doc, "coeffs", ("kind", "value"))
        return CoefficientSequence(
            CoefficientKind(kind), value=_complex_field(doc["value"], "coeffs.value")
        )
    if kind == "decaying":
        _check_keys(doc, "coeffs", ("kind", "value", "sigma"), ("q",))
        return CoefficientSequence(
            CoefficientKind.DECAYING,
            value=_complex_field(doc["value"], "coeffs.value"),
            sigma=_complex_field(doc["sigma"], "coeffs.sigma"),
            q=_real_field(doc.get("q", 0), "coeffs.q"),
        )
    raise SpecValidationError(f"coeffs: unknown kind {kind!r}")


def spec_from_dict(doc: Dict[str, Any]) -> KernelSpec:
    _check_keys(doc, "spec", ("poles", "coeffs"), ("kernel_order", "extra_terms"))
    kernel_order = doc.get("kernel_order", 1)
    if isinstance(kernel_order, bool) or not isinstance(kernel_order, int):
        raise SpecValidationError(f"kernel_order must be an integer, got {kernel_order!r}")
    extras = []
    for i, item in enumerate(doc.get("extra_terms", [])):
        _check_keys(item, f"extra_terms[{i}]", ("pole", "coeff"))
        extras.append(
            KernelTerm(
                _complex_field(item["pole"], f"extra_terms[{i}].pole"),
                _complex_field(item["coeff"], f"extra_terms[{i}].coeff"),
            )
        )
    return KernelSpec(
        poles=_poles_from_dict(doc["poles"]),
        coeffs=_coeffs_from_dict(doc["coeffs"]),
        kernel_order=kernel_order,
        extra_terms=tuple(extras),
    )


def _pair(value: complex) -> List[float]:
    return [value.real, value.imag]


def spec_to_dict(spec: KernelSpec) -> Dict[str, Any]:
    poles = spec.poles
    if poles.kind is PoleKind.LIST:
        poles_doc = {"kind": "list", "values": [_pair(v) for v in poles.values]}
    elif poles.kind is PoleKind.POWER:
        poles_doc = {"kind": "power", "a": _pair(poles.a), "p": poles.p, "b": _pair(poles.b)}
    else:
        poles_doc = {"kind": "lattice", "offset": _pair(poles.offset)}
    coeffs = spec.coeffs
    if coeffs.kind is CoefficientKind.LIST:
        coeffs_doc = {"kind": "list", "values": [_pair(v) for v in coeffs.values]}
    elif coeffs.kind is CoefficientKind.DECAYING:
        coeffs_doc = {
            "kind": "decaying",
            "value": _pair(coeffs.value),
            "sigma": _pair(coeffs.sigma),
            "q": coeffs.q,
        }
    else:
        coeffs_doc = {"kind": coeffs.kind.value, "value": _pair(coeffs.value)}
    doc = {"kernel_order": spec.kernel_order, "poles": poles_doc, "coeffs": coeffs_doc}
    if spec.extra_terms:
        doc["extra_terms"] = [
            {"pole": _pair(term.pole), "coeff": _pair(term.coeff)} for term in spec.extra_terms
        ]
    return doc


def load_spec(path) -> KernelSpec:
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as error:
        raise SpecValidationError(f"Cannot read spec {path}: {error}")
    return spec_from_dict(doc)


def load_fixture(name: str) -> KernelSpec:
    return load_spec(FIXTURES_DIR / f"{name}.json")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Evaluate a kernel sum at one point.")
    parser.add_argument("spec", type=str, help="Path to a spec JSON document.")
    parser.add_argument("--re", type=float, default=0.0, help="Real part of z.")
    parser.add_argument("--im", type=float, default=0.0, help="Imaginary part of z.")
    parser.add_argument("--derivative", type=int, default=0, help="Derivative order d.")
    args = parser.parse_args()

    result = evaluate_derivative(load_spec(args.spec), complex(args.re, args.im), args.derivative)
    print(f"{result.value} +/- {result.error_bound:.3g}")
