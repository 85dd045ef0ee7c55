"""
Nevanlinna characteristics sampled on circles |z| = r.

n(r) and N(r) come from the pole list in closed form; m(r) = mean of ln+|f| on the circle by the
trapezoidal rule, bisected locally where ln+|f| is positive or a pole sits near the circle. Orders
are slopes of ln T (or ln n) against ln r over a geometric grid, so every estimate here is a
finite-r reading of a limsup or liminf.
"""

import cmath
import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from merozero.analysis.contour_oracle import (
    ContourSpec,
    MeromorphicFunction,
    ZeroList,
    admissible_contour,
    as_function,
)
from merozero.analysis.kernel_model import KernelSpec, PoleKind, PoleSequence, pole_moduli_within
from merozero.base import ConvergenceError, InsufficientDataError, TruncationPolicy

DEFAULT_QUADRATURE_POINTS = 256
MAX_QUADRATURE_POINTS = 1 << 16
QUADRATURE_TOLERANCE = 1e-6
MAX_REFINEMENTS = 40
POLE_BAND = 0.05
MIN_DECADES = 3.0
INDEX_AGREEMENT = 0.1
BISECTION_STEPS = 60
MAX_INDEX = 64.0

CSV_HEADER = ("r", "n", "N", "m", "T")


class LogPlus(Enum):
    STANDARD = "standard"
    UNIT_FLOOR = "unit-floor"


def log_plus(x, convention: LogPlus = LogPlus.STANDARD):
    """max(0, ln x), or max(1, ln x) under the ``unit-floor`` convention."""
    floor = 0.0 if LogPlus(convention) is LogPlus.STANDARD else 1.0
    with np.errstate(divide="ignore"):
        return np.maximum(floor, np.log(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class NevanlinnaSample:
    r: float
    n_r: int
    N_r: float
    m_r: float
    T_r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError(f"Radius must be positive, got {self.r}")
        if self.T_r != self.N_r + self.m_r:
            raise ValueError("T_r must equal N_r + m_r")

    @classmethod
    def of(cls, r: float, n_r: int, N_r: float, m_r: float) -> "NevanlinnaSample":
        return cls(float(r), int(n_r), float(N_r), float(m_r), float(N_r) + float(m_r))


@dataclass(frozen=True)
class OrderEstimate:
    rho: float
    lower_order: float
    fit_window: Tuple[float, float]
    regression_residual: float
    rho_infinite: bool = False
    convergence_index: Optional[float] = None
    # set by sequence_order: |rho - convergence index| within tolerance
    index_agrees: Optional[bool] = None

    def __post_init__(self):
        if self.lower_order < 0 or (not self.rho_infinite and self.lower_order > self.rho):
            raise ValueError(f"Need 0 <= lower order <= rho, got {self.lower_order}, {self.rho}")


class DefectEstimate(NamedTuple):
    value: float
    ratios: np.ndarray
    caveat: str = "finite-r estimate of a liminf"


class FirstTheoremSpread(NamedTuple):
    radii: np.ndarray
    differences: np.ndarray
    spread: float


def _tail_converges(poles: PoleSequence, alpha: float) -> bool:
    """Whether sum |t_k|^-alpha is finite, by comparison with the integral of the tail."""
    if poles.kind is PoleKind.LIST:
        return True
    if poles.kind is PoleKind.POWER:
        return poles.p * alpha > 1
    return alpha > 1


def convergence_index(poles: PoleSequence) -> float:
    """inf{alpha > 0 : sum |t_k|^-alpha < inf}; 0 for a finite list."""
    if poles.is_finite:
        return 0.0
    lo, hi = 0.0, MAX_INDEX
    if not _tail_converges(poles, hi):
        return math.inf
    for _ in range(BISECTION_STEPS):
        mid = (lo + hi) / 2
        if _tail_converges(poles, mid):
            hi = mid
        else:
            lo = mid
    return round(hi, 9)


def counting_function(spec: KernelSpec, r: float) -> Tuple[int, float]:
    """n(r) with multiplicity kernel_order, and N(r) = sum ln(r / |t|) over |t| <= r."""
    if r <= 0:
        raise ValueError(f"Radius must be positive, got {r}")
    moduli = pole_moduli_within(spec, r)
    multiplicity = spec.kernel_order
    return multiplicity * len(moduli), multiplicity * float(np.sum(np.log(r / moduli)))


def _zero_counting(zeros: ZeroList, r: float) -> Tuple[int, float]:
    moduli = np.array([abs(entry.location) for entry in zeros.zeros])
    weights = np.array([entry.multiplicity for entry in zeros.zeros])
    inside = moduli <= r
    return int(weights[inside].sum()), float(np.sum(weights[inside] * np.log(r / moduli[inside])))


def _circle_integrand(func, contour: ContourSpec, theta, reciprocal: bool, convention: LogPlus):
    moduli = np.abs(func.values(contour.center + contour.radius * np.exp(1j * theta)))
    if reciprocal:
        with np.errstate(divide="ignore"):
            moduli = 1.0 / moduli
    return log_plus(moduli, convention)


def _periodic_trapezoid(theta: np.ndarray, values: np.ndarray) -> float:
    widths = np.diff(np.append(theta, theta[0] + 2 * np.pi))
    return float(np.sum(widths * (values + np.roll(values, -1)) / 2) / (2 * np.pi))


def _pole_angles(func, contour: ContourSpec) -> np.ndarray:
    band = POLE_BAND * contour.radius
    angles = [
        cmath.phase(pole - contour.center) % (2 * np.pi)
        for pole, _ in func.poles_within(contour.center, contour.radius + band)
        if abs(abs(pole - contour.center) - contour.radius) <= band
    ]
    return np.array(angles)


def _proximity(
    func: MeromorphicFunction,
    contour: ContourSpec,
    reciprocal: bool,
    convention: LogPlus,
) -> float:
    """Mean of ln+|f| on the circle, bisecting only where the integrand lifts off its floor.

    Intervals holding the angle of a pole close to the circle are always bisected, so the
    logarithmic peaks there get resolved without refining the whole circle.
    """
    floor = 0.0 if LogPlus(convention) is LogPlus.STANDARD else 1.0
    points = contour.quadrature_points
    theta = 2 * np.pi * np.arange(points) / points
    values = _circle_integrand(func, contour, theta, reciprocal, convention)
    estimate = _periodic_trapezoid(theta, values)
    pole_angles = _pole_angles(func, contour)
    for _ in range(MAX_REFINEMENTS):
        active = (values > floor) | (np.roll(values, -1) > floor)
        if len(pole_angles):
            holding = np.searchsorted(theta, pole_angles, side="right") - 1
            active[holding % len(theta)] = True
        if not active.any():
            return estimate
        active |= np.roll(active, 1) | np.roll(active, -1)
        widths = np.diff(np.append(theta, theta[0] + 2 * np.pi))
        midpoints = (theta + widths / 2)[active] % (2 * np.pi)
        if len(theta) + len(midpoints) > MAX_QUADRATURE_POINTS:
            break
        theta = np.append(theta, midpoints)
        values = np.append(
            values, _circle_integrand(func, contour, midpoints, reciprocal, convention)
        )
        order = np.argsort(theta)
        theta, values = theta[order], values[order]
        previous, estimate = estimate, _periodic_trapezoid(theta, values)
        logging.debug(f"m(r={contour.radius:g}) with {len(theta)} points: {estimate}")
        if abs(estimate - previous) < QUADRATURE_TOLERANCE * (1 + abs(estimate)):
            return estimate
    raise ConvergenceError(f"quadrature-not-converged for m(r) at r={contour.radius}")


def _circle(func, r: float, quadrature_points: int) -> ContourSpec:
    return admissible_contour(func, ContourSpec(0j, r, quadrature_points))


def proximity_function(
    spec: Union[KernelSpec, MeromorphicFunction],
    r: float,
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS,
    policy: Optional[TruncationPolicy] = None,
    reciprocal: bool = False,
    convention: LogPlus = LogPlus.STANDARD,
) -> float:
    """m(r, f), or m(r, 1/f) with ``reciprocal``."""
    func = as_function(spec, policy)
    return _proximity(func, _circle(func, r, quadrature_points), reciprocal, convention)


def characteristic(
    spec: KernelSpec,
    r: float,
    policy: Optional[TruncationPolicy] = None,
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS,
    convention: LogPlus = LogPlus.STANDARD,
) -> NevanlinnaSample:
    """T(r, f) = N(r, f) + m(r, f); the stored r is the radius actually used."""
    func = as_function(spec, policy)
    contour = _circle(func, r, quadrature_points)
    n_r, N_r = counting_function(spec, contour.radius)
    m_r = _proximity(func, contour, False, convention)
    return NevanlinnaSample.of(contour.radius, n_r, N_r, m_r)


def reciprocal_characteristic(
    spec: KernelSpec,
    r: float,
    zeros: ZeroList,
    policy: Optional[TruncationPolicy] = None,
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS,
) -> NevanlinnaSample:
    """T(r, 1/f), with N(r, 1/f) taken from an exhaustive zero list."""
    if zeros.exhaustive_in is None or zeros.exhaustive_in.radius < r:
        raise InsufficientDataError(f"Zero list is not exhaustive out to r={r}")
    func = as_function(spec, policy)
    contour = _circle(func, r, quadrature_points)
    if contour.radius > zeros.exhaustive_in.radius:
        raise InsufficientDataError(f"Jittered radius {contour.radius} leaves the zero disk")
    n_r, N_r = _zero_counting(zeros, contour.radius)
    m_r = _proximity(func, contour, True, LogPlus.STANDARD)
    return NevanlinnaSample.of(contour.radius, n_r, N_r, m_r)


def _check_grid(r_grid: Sequence[float], slack: float = 1e-9) -> np.ndarray:
    radii = np.sort(np.asarray(r_grid, dtype=float))
    if radii.size < 4 or radii[0] <= 0:
        raise InsufficientDataError("An r grid needs at least four positive radii")
    if np.log10(radii[-1] / radii[0]) < MIN_DECADES - slack:
        raise InsufficientDataError(
            f"r grid spans {np.log10(radii[-1] / radii[0]):.2f} decades, need {MIN_DECADES:g}"
        )
    return radii


def _fit_orders(
    radii: np.ndarray, logs: np.ndarray
) -> Tuple[float, float, Tuple[float, float], float]:
    x = np.log(radii)
    top = radii >= radii[-1] / 10
    if top.sum() < 2:
        top[-2:] = True
    (slope, _), residuals, *_ = np.polyfit(x[top], logs[top], 1, full=True)
    residual = math.sqrt(float(residuals[0]) / top.sum()) if residuals.size else 0.0
    rho = max(0.0, float(slope))

    # lower order: the smallest decade-window slope
    window_slopes = []
    for i, r in enumerate(radii):
        j = np.searchsorted(radii, 10 * r)
        if j >= radii.size:
            break
        window_slopes.append((logs[j] - logs[i]) / (x[j] - x[i]))
    lower = min(window_slopes) if window_slopes else rho
    lower = float(np.clip(lower, 0.0, rho))
    return rho, lower, (float(radii[top][0]), float(radii[-1])), residual


def order_estimate(
    spec: KernelSpec, r_grid: Sequence[float], policy: Optional[TruncationPolicy] = None
) -> OrderEstimate:
    """rho from the slope of ln+ T against ln r over the top decade of the grid."""
    radii = _check_grid(r_grid)
    return order_from_samples([characteristic(spec, r, policy) for r in radii])


def order_from_samples(samples: Sequence[NevanlinnaSample]) -> OrderEstimate:
    # jittered radii may pull the span slightly under three decades
    used = _check_grid([sample.r for sample in samples], slack=0.01)
    samples = sorted(samples, key=lambda sample: sample.r)
    T = np.array([sample.T_r for sample in samples])
    if not np.all(np.isfinite(T)):
        return OrderEstimate(math.inf, 0.0, (float(used[0]), float(used[-1])), math.nan, True)
    if np.any(np.diff(T) < -1e-9 * np.abs(T[1:])):
        logging.warning("T(r) decreased along the grid")
    rho, lower, window, residual = _fit_orders(used, log_plus(T))
    logging.info(f"Order estimate rho={rho:.4f}, lower order={lower:.4f}")
    return OrderEstimate(rho, lower, window, residual)


def _pole_count(poles: PoleSequence, r: float) -> int:
    return int(np.count_nonzero(np.abs(poles.at(poles.indices_within(r))) <= r))


def sequence_order(poles: PoleSequence, r_grid: Sequence[float]) -> OrderEstimate:
    """Slope of ln+ n(r) against ln r, checked against the convergence index."""
    radii = _check_grid(r_grid)
    counts = np.array([_pole_count(poles, r) for r in radii], dtype=float)
    rho, lower, window, residual = _fit_orders(radii, log_plus(counts))
    index = convergence_index(poles)
    agrees = abs(rho - index) <= INDEX_AGREEMENT
    if not agrees:
        logging.warning(f"Sequence order {rho:.4f} differs from the convergence index {index:g}")
    return OrderEstimate(rho, lower, window, residual, convergence_index=index, index_agrees=agrees)


def defect_estimate(
    spec: KernelSpec, r_grid: Sequence[float], policy: Optional[TruncationPolicy] = None
) -> DefectEstimate:
    """min over the grid of m(r, 1/f) / T(r, f), clipped to [0, 1]."""
    radii = np.sort(np.asarray(r_grid, dtype=float))
    func = as_function(spec, policy)
    ratios = []
    for r in radii:
        contour = _circle(func, r, DEFAULT_QUADRATURE_POINTS)
        n_r, N_r = counting_function(spec, contour.radius)
        T = N_r + _proximity(func, contour, False, LogPlus.STANDARD)
        if T <= 0:
            logging.debug(f"T(r={contour.radius:g}) = 0, skipped")
            continue
        ratios.append(_proximity(func, contour, True, LogPlus.STANDARD) / T)
    if not ratios:
        raise InsufficientDataError("T(r, f) vanished on every radius of the grid")
    ratios = np.clip(np.array(ratios), 0.0, 1.0)
    return DefectEstimate(float(ratios.min()), ratios)


def first_theorem_spread(
    spec: KernelSpec,
    r_grid: Sequence[float],
    zeros: ZeroList,
    policy: Optional[TruncationPolicy] = None,
) -> FirstTheoremSpread:
    """T(r, 1/f) - T(r, f) along the grid and its max - min spread."""
    radii, differences = [], []
    for r in np.sort(np.asarray(r_grid, dtype=float)):
        direct = characteristic(spec, r, policy)
        inverse = reciprocal_characteristic(spec, r, zeros, policy)
        radii.append(direct.r)
        differences.append(inverse.T_r - direct.T_r)
    differences = np.array(differences)
    return FirstTheoremSpread(np.array(radii), differences, float(np.ptp(differences)))


def write_samples_csv(samples: Iterable[NevanlinnaSample], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for sample in samples:
        writer.writerow(
            [
                "%.6g" % sample.r,
                str(sample.n_r),
                "%.6g" % sample.N_r,
                "%.6g" % sample.m_r,
                "%.6g" % sample.T_r,
            ]
        )
