"""
Argument-principle oracle.

Counts zeros minus poles inside circles, locates zeros in a disk by quadrisection with
Newton refinement, and evaluates sums over located zeros. None of this uses the power-sum
formulas, so it serves as an independent check on them.
"""

import argparse
import cmath
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from merozero.analysis.kernel_model import (
    PROXIMITY_FACTOR,
    KernelSpec,
    KernelTerm,
    evaluate_many,
    load_spec,
    poles_near,
)
from merozero.base import (
    EPS,
    ConvergenceError,
    HypothesisViolated,
    MerozeroError,
    PoleProximityError,
    TruncationPolicy,
    ValueWithError,
)

DEFAULT_QUADRATURE_POINTS = 256
MAX_QUADRATURE_POINTS = 1 << 16
COUNT_MARGIN = 0.25
CLEARANCE = 1e-6
JITTER_FACTORS = (0.00377, -0.00613, 0.00859)
SPLIT_FRACTIONS = (0.5113, 0.4731, 0.5379)
MIN_CELL_FRACTION = 1e-3
EDGE_START_POINTS = 32
MAX_EDGE_POINTS = 1 << 14
MAX_PHASE_STEP = math.pi / 4
NEWTON_MAX_ITERATIONS = 100
NEWTON_STEP_TOL = 1e-14
RESIDUAL_FACTOR = 1e-12


class MeromorphicFunction(ABC):
    """A function the oracle can sample: values, first derivatives and known poles."""

    @abstractmethod
    def evaluate(self, z: np.ndarray, d: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """Values of f^(d) at z and bounds on their errors."""
        pass  # pragma: no cover

    @abstractmethod
    def poles_within(self, center: complex, radius: float) -> List[Tuple[complex, int]]:
        """Poles within ``radius`` of ``center`` with their orders."""
        pass  # pragma: no cover

    def values(self, z) -> np.ndarray:
        return self.evaluate(np.atleast_1d(np.asarray(z, dtype=complex)), 0)[0]

    def derivatives(self, z) -> np.ndarray:
        return self.evaluate(np.atleast_1d(np.asarray(z, dtype=complex)), 1)[0]


class KernelFunction(MeromorphicFunction):
    def __init__(self, spec: KernelSpec, policy: Optional[TruncationPolicy] = None):
        self.spec = spec
        self.policy = policy or TruncationPolicy()

    def evaluate(self, z, d=0):
        result = evaluate_many(self.spec, z, self.policy, d)
        return result.values, result.error_bounds

    def poles_within(self, center, radius):
        return poles_near(self.spec, center, radius)


class SineFixture(MeromorphicFunction):
    """sin(pi z) / (pi z): entire, zeros at the nonzero integers."""

    def evaluate(self, z, d=0):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        y = np.pi * z
        small = np.abs(z) < 1e-8
        safe = np.where(small, 1.0, y)
        if d == 0:
            values = np.where(small, 1 - y**2 / 6, np.sin(safe) / safe)
        elif d == 1:
            values = np.where(
                small, -np.pi * y / 3, np.pi * (safe * np.cos(safe) - np.sin(safe)) / safe**2
            )
        else:
            raise ValueError(f"SineFixture provides d <= 1, got {d}")
        scale = np.cosh(y.imag) * np.pi ** (d + 1) / np.maximum(1.0, np.abs(safe))
        return values, 8 * EPS * np.maximum(scale, np.abs(values))

    def poles_within(self, center, radius):
        return []


FunctionLike = Union[KernelSpec, MeromorphicFunction]


def as_function(func: FunctionLike, policy: Optional[TruncationPolicy] = None):
    if isinstance(func, KernelSpec):
        return KernelFunction(func, policy)
    return func


@dataclass(frozen=True)
class ContourSpec:
    center: complex = 0j
    radius: float = 1.0
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"Contour radius must be positive, got {self.radius}")
        n = self.quadrature_points
        if n < 4 or n & (n - 1):
            raise ValueError(f"quadrature_points must be a power of 2, got {n}")

    def nodes(self, points: Optional[int] = None) -> np.ndarray:
        points = points or self.quadrature_points
        return self.center + self.radius * np.exp(2j * np.pi * np.arange(points) / points)


class ZeroEntry(NamedTuple):
    location: complex
    multiplicity: int
    refinement_error: float


@dataclass(frozen=True)
class ZeroList:
    zeros: Tuple[ZeroEntry, ...]
    exhaustive_in: Optional[ContourSpec] = None

    def __post_init__(self):
        if any(entry.multiplicity < 1 for entry in self.zeros):
            raise ValueError("Zero multiplicities must be positive")

    @property
    def total_multiplicity(self) -> int:
        return sum(entry.multiplicity for entry in self.zeros)

    def locations(self) -> np.ndarray:
        return np.array([entry.location for entry in self.zeros], dtype=complex)

    def within(self, radius: float) -> "ZeroList":
        """Zeros with |s| <= radius; stays exhaustive inside a smaller disk about 0."""
        kept = tuple(entry for entry in self.zeros if abs(entry.location) <= radius)
        exhaustive = None
        if (
            self.exhaustive_in is not None
            and self.exhaustive_in.center == 0
            and radius <= self.exhaustive_in.radius
        ):
            exhaustive = replace(self.exhaustive_in, radius=radius)
        return ZeroList(kept, exhaustive)


class CountResult(NamedTuple):
    count: int
    margin: float
    contour: ContourSpec


class DirectSum(NamedTuple):
    value: complex
    incomplete: bool
    error_bound: float


def _clears(func: MeromorphicFunction, contour: ContourSpec) -> bool:
    gap = CLEARANCE * contour.radius
    for pole, _ in func.poles_within(contour.center, contour.radius + 2 * gap):
        if abs(abs(pole - contour.center) - contour.radius) <= gap:
            return False
    z = contour.nodes(max(1024, 4 * contour.quadrature_points))
    f = func.values(z)
    fp = func.derivatives(z)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(fp))):
        return False
    with np.errstate(divide="ignore", invalid="ignore"):
        distance = np.abs(f) / np.abs(fp)
    return bool(np.all(np.nan_to_num(distance, nan=0.0) > gap))


def admissible_contour(func: FunctionLike, contour: ContourSpec, policy=None) -> ContourSpec:
    """The contour, or a jittered radius when a pole or zero sits too close to it."""
    func = as_function(func, policy)
    candidates = [contour] + [
        replace(contour, radius=contour.radius * (1 + jitter)) for jitter in JITTER_FACTORS
    ]
    for candidate in candidates:
        try:
            if _clears(func, candidate):
                if candidate is not contour:
                    logging.info(
                        f"Contour radius moved from {contour.radius} to {candidate.radius}"
                    )
                return candidate
        except PoleProximityError:
            pass
    raise ConvergenceError(f"No admissible contour near radius {contour.radius}")


def _argument_integral(func: MeromorphicFunction, contour: ContourSpec, points: int) -> complex:
    z = contour.nodes(points)
    return complex(np.mean(func.derivatives(z) / func.values(z) * (z - contour.center)))


def count_zeros_minus_poles(
    func: FunctionLike, contour: ContourSpec, policy: Optional[TruncationPolicy] = None
) -> CountResult:
    """(1/2 pi i) of the integral of f'/f over the circle, by the trapezoidal rule."""
    func = as_function(func, policy)
    contour = admissible_contour(func, contour)
    previous = None
    points = contour.quadrature_points
    while points <= MAX_QUADRATURE_POINTS:
        raw = _argument_integral(func, contour, points)
        rounded = round(raw.real)
        margin = abs(raw - rounded)
        logging.debug(f"Argument integral with {points} points: {raw}")
        if margin < COUNT_MARGIN:
            if previous == rounded:
                return CountResult(int(rounded), margin, replace(contour, quadrature_points=points))
            previous = rounded
        else:
            previous = None
        points *= 2
    raise ConvergenceError(f"quadrature-not-converged on |z - {contour.center}| = {contour.radius}")


class Rect(NamedTuple):
    lower: complex
    upper: complex

    @property
    def center(self) -> complex:
        return (self.lower + self.upper) / 2

    @property
    def diameter(self) -> float:
        return abs(self.upper - self.lower)

    def corners(self) -> List[complex]:
        return [
            self.lower,
            complex(self.upper.real, self.lower.imag),
            self.upper,
            complex(self.lower.real, self.upper.imag),
        ]

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (
            self.lower.real - margin <= z.real <= self.upper.real + margin
            and self.lower.imag - margin <= z.imag <= self.upper.imag + margin
        )

    def boundary_distance(self, z: complex) -> float:
        if not self.contains(z):
            return 0.0
        return min(
            z.real - self.lower.real,
            self.upper.real - z.real,
            z.imag - self.lower.imag,
            self.upper.imag - z.imag,
        )

    def split(self, fraction: float) -> List["Rect"]:
        x = self.lower.real + fraction * (self.upper.real - self.lower.real)
        y = self.lower.imag + fraction * (self.upper.imag - self.lower.imag)
        lo, hi = self.lower, self.upper
        return [
            Rect(lo, complex(x, y)),
            Rect(complex(x, lo.imag), complex(hi.real, y)),
            Rect(complex(x, y), hi),
            Rect(complex(lo.real, y), complex(x, hi.imag)),
        ]


def _boundary_winding(func: MeromorphicFunction, rect: Rect) -> Optional[int]:
    corners = rect.corners()
    total = 0.0
    for start, end in zip(corners, corners[1:] + corners[:1]):
        points = EDGE_START_POINTS
        while True:
            z = start + np.linspace(0.0, 1.0, points + 1) * (end - start)
            v = func.values(z)
            if not np.all(np.isfinite(v)) or np.any(v == 0):
                return None
            steps = np.angle(v[1:] / v[:-1])
            if np.abs(steps).max() <= MAX_PHASE_STEP:
                break
            points *= 2
            if points > MAX_EDGE_POINTS:
                return None
        total += steps.sum()
    winding = total / (2 * math.pi)
    if abs(winding - round(winding)) > 0.1:
        return None
    return round(winding)


def _cell_count(func: MeromorphicFunction, rect: Rect) -> Optional[int]:
    """Zeros inside the cell: boundary winding plus enclosed pole orders."""
    inside = 0
    for pole, order in func.poles_within(rect.center, rect.diameter / 2 * (1 + 1e-9)):
        if rect.contains(pole):
            if rect.boundary_distance(pole) <= 1e-9 * rect.diameter:
                return None
            inside += order
    try:
        winding = _boundary_winding(func, rect)
    except PoleProximityError:
        return None
    return None if winding is None else winding + inside


def _subdivide(func, rect: Rect) -> Optional[List[Tuple[Rect, int]]]:
    for fraction in SPLIT_FRACTIONS:
        children = rect.split(fraction)
        counts = [_cell_count(func, child) for child in children]
        if all(count is not None for count in counts):
            return list(zip(children, counts))
    return None


def newton(
    func: MeromorphicFunction,
    z0: complex,
    multiplicity: int = 1,
    scale: float = 1.0,
    region: Optional[Rect] = None,
) -> Optional[Tuple[complex, float]]:
    """Modified Newton iteration; the root and its last step, or None.

    With ``region`` the iteration is abandoned once it leaves the region.
    """
    z = complex(z0)
    step = math.inf
    for _ in range(NEWTON_MAX_ITERATIONS):
        try:
            f = complex(func.values(z)[0])
            fp = complex(func.derivatives(z)[0])
        except MerozeroError as error:
            logging.debug(f"Newton stopped at {z}: {error}")
            return None
        if f == 0:
            return z, 0.0
        if fp == 0 or not (cmath.isfinite(f) and cmath.isfinite(fp)):
            return None
        step = multiplicity * f / fp
        z -= step
        if not cmath.isfinite(z):
            return None
        if region is not None and not region.contains(z):
            return None
        if abs(step) <= NEWTON_STEP_TOL * max(1.0, abs(z)):
            break
    try:
        values, bounds = func.evaluate(np.array([z]), 0)
    except MerozeroError:
        return None
    if abs(values[0]) > max(RESIDUAL_FACTOR * scale, 4 * bounds[0]):
        return None
    return z, max(abs(step), EPS * abs(z))


def _seeds(rect: Rect, count: int) -> List[complex]:
    center = rect.center
    half = (rect.upper - rect.lower) / 2
    ring = [
        center + 0.35 * complex(half.real * math.cos(a), half.imag * math.sin(a))
        for a in 2 * math.pi * (np.arange(8) + 0.25) / 8
    ]
    return [center] + ring if count > 0 else [center]


def _refine(func, rect: Rect, count: int) -> Optional[List[ZeroEntry]]:
    try:
        scale = float(np.abs(func.values(rect.corners())).max())
    except MerozeroError:
        return None
    pad = rect.diameter * (1 + 1j)
    region = Rect(rect.lower - pad, rect.upper + pad)
    margin = 1e-6 * rect.diameter
    roots: List[Tuple[complex, float]] = []
    for seed in _seeds(rect, count):
        found = newton(func, seed, 1, scale, region)
        if found is None or not rect.contains(found[0], margin):
            continue
        if all(abs(found[0] - z) > 1e-8 * max(1.0, abs(z)) for z, _ in roots):
            roots.append(found)
        if len(roots) == count:
            break
    if len(roots) == count:
        return [ZeroEntry(z, 1, err) for z, err in roots]
    if len(roots) == 1:
        polished = newton(func, roots[0][0], count, scale, region)
        if polished is not None:
            return [ZeroEntry(polished[0], count, polished[1])]
    return None


def _root_cell(func, disk: ContourSpec) -> Tuple[Rect, int]:
    for factor in (1.0,) + tuple(1 + abs(j) for j in JITTER_FACTORS):
        half = disk.radius * factor
        rect = Rect(disk.center - half * (1 + 1j), disk.center + half * (1 + 1j))
        count = _cell_count(func, rect)
        if count is not None:
            return rect, count
    raise ConvergenceError(f"Cannot count zeros on the square around radius {disk.radius}")


def find_zeros_in_disk(
    func: FunctionLike,
    R: float,
    policy: Optional[TruncationPolicy] = None,
    center: complex = 0j,
) -> ZeroList:
    """Every zero with |s - center| <= R' (R' = R up to jitter), sorted by (re, im)."""
    func = as_function(func, policy)
    disk = admissible_contour(func, ContourSpec(center, R))
    enclosed = sum(
        order for pole, order in func.poles_within(disk.center, disk.radius)
    )
    disk_count = count_zeros_minus_poles(func, disk).count + enclosed

    root, root_count = _root_cell(func, disk)
    min_diameter = MIN_CELL_FRACTION * R
    exhaustive = True
    found: List[ZeroEntry] = []
    stack = [(root, root_count, 0)]
    while stack:
        cell, count, depth = stack.pop()
        if count == 0:
            continue
        if count < 0:
            logging.warning(f"Negative zero count in cell {cell}")
            exhaustive = False
            continue
        if count == 1 or cell.diameter <= min_diameter:
            zeros = _refine(func, cell, count)
            if zeros is not None:
                found.extend(zeros)
                continue
            if cell.diameter <= min_diameter:
                logging.warning(f"Unresolved cell {cell} holding {count} zeros")
                exhaustive = False
                continue
            logging.debug(f"Newton missed the zero in cell {cell}; splitting")
        children = _subdivide(func, cell)
        if children is None:
            logging.warning(f"Cannot subdivide cell {cell}")
            exhaustive = False
            continue
        if sum(c for _, c in children) != count:
            logging.debug(f"Child counts disagree with parent at depth {depth}")
        stack.extend((child, c, depth + 1) for child, c in children)

    unique: List[ZeroEntry] = []
    for entry in found:
        if abs(entry.location - disk.center) > disk.radius:
            continue
        if any(
            abs(entry.location - other.location) <= 1e-8 * max(1.0, abs(other.location))
            for other in unique
        ):
            continue
        unique.append(entry)
    unique.sort(key=lambda entry: (entry.location.real, entry.location.imag))

    total = sum(entry.multiplicity for entry in unique)
    if exhaustive and total != disk_count:
        logging.warning(f"Located {total} zeros but the disk holds {disk_count}")
        exhaustive = False
    logging.info(f"Found {len(unique)} zeros in |z - {center}| <= {disk.radius}")
    return ZeroList(tuple(unique), disk if exhaustive else None)


def direct_zero_power_sum(
    zl: ZeroList, N: int, tail_bound: Optional[float] = None
) -> DirectSum:
    """sum over located zeros of multiplicity * s^-(N+1)."""
    value = 0j
    error = 0.0 if tail_bound is None else float(tail_bound)
    for entry in zl.zeros:
        if abs(entry.location) <= PROXIMITY_FACTOR * EPS:
            raise HypothesisViolated("A located zero sits at the origin")
        term = entry.multiplicity * entry.location ** -(N + 1)
        value += term
        error += (N + 1) * abs(term) * entry.refinement_error / abs(entry.location)
        error += EPS * abs(term)
    incomplete = zl.exhaustive_in is None or tail_bound is None
    return DirectSum(value, incomplete, error)


def _weighted_points(items: Iterable, multiplicity: int) -> List[Tuple[complex, int]]:
    points = []
    for item in items:
        if isinstance(item, ZeroEntry):
            points.append((complex(item.location), item.multiplicity))
        elif isinstance(item, KernelTerm):
            points.append((complex(item.pole), multiplicity))
        else:
            points.append((complex(item), multiplicity))
    return points


def corollary1_logderiv(
    zeros: Union[ZeroList, Sequence],
    poles: Sequence,
    p_prime: Sequence,
    p: int,
    z: complex,
    zero_tail_bound: float = 0.0,
    pole_tail_bound: float = 0.0,
    pole_multiplicity: int = 1,
) -> ValueWithError:
    """F'/F(z) = P'(z) + z^p sum 1/(s^p (z - s)) - z^p sum 1/(t^p (z - t))."""
    if p < 0:
        raise ValueError(f"p must be non-negative, got {p}")
    z = complex(z)
    zero_points = _weighted_points(zeros.zeros if isinstance(zeros, ZeroList) else zeros, 1)
    pole_points = _weighted_points(poles, pole_multiplicity)
    for point, _ in zero_points + pole_points:
        if abs(z - point) <= PROXIMITY_FACTOR * EPS * max(1.0, abs(point)):
            raise PoleProximityError(f"z = {z} collides with a zero or pole at {point}")

    polynomial = ValueWithError(0)
    for j, coefficient in enumerate(p_prime):
        polynomial = polynomial + ValueWithError.coerce(coefficient).scaled(z**j)
    zp = z**p
    terms = [m * zp / (s**p * (z - s)) for s, m in zero_points]
    terms += [-m * zp / (t**p * (z - t)) for t, m in pole_points]
    total = sum(terms, 0j)
    rounding = (len(terms) + 2) * EPS * sum(abs(t) for t in terms)
    return polynomial + ValueWithError(total, rounding + zero_tail_bound + pole_tail_bound)


def weierstrass_factor(z, p: int):
    """E(z, p) = (1 - z) exp(z + z^2/2 + ... + z^p/p)."""
    if p < 0:
        raise ValueError(f"p must be non-negative, got {p}")
    z = np.asarray(z, dtype=complex)
    exponent = sum(z**j / j for j in range(1, p + 1)) if p else 0
    result = (1 - z) * np.exp(exponent)
    return complex(result) if result.ndim == 0 else result


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Locate the zeros of a kernel sum in a disk.")
    parser.add_argument("spec", type=str, help="Path to a spec JSON document.")
    parser.add_argument("--radius", type=float, default=10.0, help="Disk radius.")
    args = parser.parse_args()

    zero_list = find_zeros_in_disk(load_spec(args.spec), args.radius)
    for entry in zero_list.zeros:
        print(f"{entry.location}  multiplicity {entry.multiplicity}")
    print(f"exhaustive: {zero_list.exhaustive_in is not None}")
