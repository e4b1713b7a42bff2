"""Exact l-infinity primitives: balls, dyadic cubes, shrunk rectangles and their grids."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from config.constants import (
    DEFAULT_CELL_BUDGET,
    DEFAULT_MAX_SUBCUBES,
    LEVEL_FACTOR,
    MAX_DYADIC_LEVEL,
    ROTATION_TOLERANCE,
    SPACING_MODULUS,
)
from models.errors import CellBudgetExceeded, InvalidParameterError
from tools.formula import ShrinkProfile, as_profile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Point:
    coords: Tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(c) for c in self.coords)
        object.__setattr__(self, "coords", values)
        if not values:
            raise InvalidParameterError("a point needs at least one coordinate")
        if any(not math.isfinite(c) for c in values):
            raise InvalidParameterError(f"non-finite coordinate in {values}")

    @property
    def d(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class Ball:
    """Closed l-infinity ball, i.e. the cube [x - r, x + r]^d."""

    center: Point
    radius: float

    def __post_init__(self) -> None:
        if not isinstance(self.center, Point):
            object.__setattr__(self, "center", Point(tuple(self.center)))
        if not (self.radius >= 0) or not math.isfinite(self.radius):
            raise InvalidParameterError(f"radius must be a finite non-negative number, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def d(self) -> int:
        return self.center.d

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        x = self.center.as_array()
        return x - self.radius, x + self.radius


@dataclass(frozen=True)
class DyadicCube:
    """prod_i [k_i 2^-p, (k_i + 1) 2^-p], kept as integers for exact comparisons."""

    level: int
    index: Tuple[int, ...]

    def __post_init__(self) -> None:
        index = tuple(int(k) for k in self.index)
        object.__setattr__(self, "index", index)
        if self.level < 0 or self.level > MAX_DYADIC_LEVEL:
            raise InvalidParameterError(f"level {self.level} outside [0, {MAX_DYADIC_LEVEL}]")
        if not index:
            raise InvalidParameterError("a cube needs at least one index")
        top = 1 << self.level
        if any(k < 0 or k >= top for k in index):
            raise InvalidParameterError(f"index {index} outside [0, {top - 1}] at level {self.level}")

    @classmethod
    def root(cls, d: int) -> "DyadicCube":
        return cls(0, (0,) * d)

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.level)

    def lower(self) -> np.ndarray:
        return np.ldexp(np.asarray(self.index, dtype=float), -self.level)

    def upper(self) -> np.ndarray:
        return np.ldexp(np.asarray(self.index, dtype=float) + 1.0, -self.level)

    def digits(self) -> List[int]:
        """Child symbols along the path from the root; bit i of a symbol is coordinate i's digit."""
        symbols = []
        for j in range(1, self.level + 1):
            shift = self.level - j
            symbols.append(sum(((k >> shift) & 1) << i for i, k in enumerate(self.index)))
        return symbols

    def contains_cube(self, other: "DyadicCube") -> bool:
        if other.level < self.level or other.d != self.d:
            return False
        shift = other.level - self.level
        return all((k >> shift) == j for k, j in zip(other.index, self.index))


@dataclass(frozen=True)
class Rotation:
    matrix: Tuple[Tuple[float, ...], ...]

    def __post_init__(self) -> None:
        rows = tuple(tuple(float(v) for v in row) for row in self.matrix)
        object.__setattr__(self, "matrix", rows)
        m = np.asarray(rows, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidParameterError(f"rotation must be square, got shape {m.shape}")
        if not np.allclose(m.T @ m, np.eye(m.shape[0]), rtol=0.0, atol=ROTATION_TOLERANCE):
            raise InvalidParameterError("rotation columns are not orthonormal")

    @classmethod
    def identity(cls, d: int) -> "Rotation":
        return cls(tuple(tuple(1.0 if i == j else 0.0 for j in range(d)) for i in range(d)))

    @classmethod
    def from_array(cls, m: np.ndarray) -> "Rotation":
        return cls(tuple(tuple(row) for row in np.asarray(m, dtype=float).tolist()))

    @property
    def d(self) -> int:
        return len(self.matrix)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.as_array(), np.eye(self.d)))


@dataclass(frozen=True)
class AnisotropicRectangle:
    """The body anchor + O diag(r^tau_1, ..., r^tau_d) [0,1]^d."""

    anchor: Point
    base_radius: float
    profile: ShrinkProfile
    rotation: Rotation

    def __post_init__(self) -> None:
        if not (0.0 < self.base_radius < 1.0):
            raise InvalidParameterError(f"base radius must lie in (0, 1), got {self.base_radius}")
        if not (self.anchor.d == self.profile.d == self.rotation.d):
            raise InvalidParameterError("anchor, profile and rotation dimensions differ")

    @property
    def d(self) -> int:
        return self.anchor.d

    @property
    def sides(self) -> Tuple[float, ...]:
        return tuple(self.base_radius**t for t in self.profile.exponents)

    @property
    def smallest_side(self) -> float:
        return self.base_radius**self.profile.largest

    @property
    def is_axis_aligned(self) -> bool:
        return self.rotation.is_identity


def _check_same_dimension(a: int, b: int) -> None:
    if a != b:
        raise InvalidParameterError(f"dimension mismatch: {a} != {b}")


def linf_distance(a: Point, b: Point) -> float:
    _check_same_dimension(a.d, b.d)
    return max(abs(x - y) for x, y in zip(a.coords, b.coords))


def balls_intersect(a: Ball, b: Ball) -> bool:
    return linf_distance(a.center, b.center) <= a.radius + b.radius


def ball_contains(a: Ball, b: Ball) -> bool:
    """True when b is a subset of a."""
    return linf_distance(a.center, b.center) + b.radius <= a.radius


def linf_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise l-infinity distances between two (n, d) arrays of points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidParameterError(f"shape mismatch: {a.shape} != {b.shape}")
    return np.max(np.abs(a - b), axis=-1)


def balls_intersect_array(
    centers_a: np.ndarray, radii_a: np.ndarray, centers_b: np.ndarray, radii_b: np.ndarray
) -> np.ndarray:
    return linf_distances(centers_a, centers_b) <= np.asarray(radii_a) + np.asarray(radii_b)


def ball_contains_array(
    centers_a: np.ndarray, radii_a: np.ndarray, centers_b: np.ndarray, radii_b: np.ndarray
) -> np.ndarray:
    """Row i is True when ball b_i is a subset of ball a_i."""
    return linf_distances(centers_a, centers_b) + np.asarray(radii_b) <= np.asarray(radii_a)


def scale_ball(ball: Ball, t: float) -> Ball:
    if t < 0:
        raise InvalidParameterError(f"scale factor must be non-negative, got {t}")
    return Ball(ball.center, t * ball.radius)


def cube_geometry(cube: DyadicCube) -> Tuple[Point, float]:
    return Point(tuple(cube.lower().tolist())), cube.side


def cube_children(cube: DyadicCube) -> List[DyadicCube]:
    """The 2^d children; child number s has bit i equal to coordinate i's new digit."""
    children = []
    for symbol in range(1 << cube.d):
        index = tuple(2 * k + ((symbol >> i) & 1) for i, k in enumerate(cube.index))
        children.append(DyadicCube(cube.level + 1, index))
    return children


def to_unit_frame(cube: DyadicCube, x: Sequence[float]) -> np.ndarray:
    """T_D: the affine map sending the cube onto [0,1]^d."""
    return np.ldexp(np.asarray(x, dtype=float), cube.level) - np.asarray(cube.index, dtype=float)


def from_unit_frame(cube: DyadicCube, y: Sequence[float]) -> np.ndarray:
    return np.ldexp(np.asarray(y, dtype=float) + np.asarray(cube.index, dtype=float), -cube.level)


def shrink_ball(
    ball: Ball, profile: ShrinkProfile | Iterable[float], rotation: Optional[Rotation] = None
) -> AnisotropicRectangle:
    profile = as_profile(profile)
    _check_same_dimension(ball.d, profile.d)
    if not (0.0 < ball.radius < 1.0):
        raise InvalidParameterError(f"cannot shrink a ball of radius {ball.radius}: need 0 < r < 1")
    rotation = rotation or Rotation.identity(ball.d)
    return AnisotropicRectangle(ball.center, ball.radius, profile, rotation)


def rectangle_vertices(rect: AnisotropicRectangle) -> np.ndarray:
    """All 2^d vertices as a (2^d, d) array."""
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=rect.d)))
    edges = rect.rotation.as_array() * np.asarray(rect.sides)[None, :]
    return rect.anchor.as_array()[None, :] + corners @ edges.T


def rectangle_bounding_box(rect: AnisotropicRectangle) -> Tuple[np.ndarray, np.ndarray]:
    if rect.is_axis_aligned:
        lo = rect.anchor.as_array()
        return lo, lo + np.asarray(rect.sides)
    vertices = rectangle_vertices(rect)
    return vertices.min(axis=0), vertices.max(axis=0)


def _boxes_meet_rectangle(rect: AnisotropicRectangle, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Separating-axis test of a batch of closed boxes (rows of lo/hi) against the rectangle.

    The coordinate axes and the rectangle's own axes are tested; in d <= 2 these are
    all the separating axes, in higher dimension the answer errs towards "intersects".
    """
    box_lo, box_hi = rectangle_bounding_box(rect)
    hit = np.all((lo <= box_hi) & (hi >= box_lo), axis=1)
    if rect.is_axis_aligned:
        return hit
    o = rect.rotation.as_array()
    anchor = rect.anchor.as_array()
    centers = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    for j, side in enumerate(rect.sides):
        axis = o[:, j]
        offset = float(anchor @ axis)
        c = centers @ axis
        reach = half @ np.abs(axis)
        hit &= (c - reach <= offset + side) & (c + reach >= offset)
    return hit


def rectangle_intersects_box(rect: AnisotropicRectangle, lo: Sequence[float], hi: Sequence[float]) -> bool:
    lo_arr = np.asarray(lo, dtype=float)[None, :]
    hi_arr = np.asarray(hi, dtype=float)[None, :]
    return bool(_boxes_meet_rectangle(rect, lo_arr, hi_arr)[0])


def rectangle_inside_box(rect: AnisotropicRectangle, lo: Sequence[float], hi: Sequence[float]) -> bool:
    box_lo, box_hi = rectangle_bounding_box(rect)
    return bool(np.all(box_lo >= np.asarray(lo, dtype=float)) and np.all(box_hi <= np.asarray(hi, dtype=float)))


def rectangle_inside_ball(rect: AnisotropicRectangle, ball: Ball) -> bool:
    lo, hi = ball.bounds()
    return rectangle_inside_box(rect, lo, hi)


def _clipped_fraction(anchor: float, width: float, lo: float, hi: float) -> float:
    # differences first: widths far below the anchor's ulp still resolve
    return min(max((hi - anchor) / width, 0.0), 1.0) - min(max((lo - anchor) / width, 0.0), 1.0)


def rectangle_box_fraction(rect: AnisotropicRectangle, lo: Sequence[float], hi: Sequence[float]) -> float:
    """Share of the rectangle's volume lying in the box [lo, hi].

    Axis-aligned rectangles factor per axis. Rotated ones are cut in the rectangle's
    own unit frame, where the answer is the volume of a convex polytope.
    """
    lo_arr = np.asarray(lo, dtype=float)
    hi_arr = np.asarray(hi, dtype=float)
    if not rectangle_intersects_box(rect, lo_arr, hi_arr):
        return 0.0
    if rectangle_inside_box(rect, lo_arr, hi_arr):
        return 1.0
    anchor = rect.anchor.as_array()
    if rect.is_axis_aligned:
        return math.prod(
            max(_clipped_fraction(a, w, l, h), 0.0)
            for a, w, l, h in zip(anchor.tolist(), rect.sides, lo_arr.tolist(), hi_arr.tolist())
        )
    return _polytope_fraction(rect, lo_arr - anchor, hi_arr - anchor)


def _polytope_fraction(rect: AnisotropicRectangle, lo: np.ndarray, hi: np.ndarray) -> float:
    d = rect.d
    frame = rect.rotation.as_array() * np.asarray(rect.sides)[None, :]
    # v in [0,1]^d with lo <= frame v <= hi, every row as a . v <= b
    a = np.vstack([frame, -frame, np.eye(d), -np.eye(d)])
    b = np.concatenate([hi, -lo, np.ones(d), np.zeros(d)])
    norms = np.linalg.norm(a, axis=1)
    a, b = a / norms[:, None], b / norms
    # Chebyshev centre: maximise t subject to a v + t <= b
    lp = linprog(
        c=np.concatenate([np.zeros(d), [-1.0]]),
        A_ub=np.hstack([a, np.ones((len(a), 1))]),
        b_ub=b,
        bounds=[(None, None)] * d + [(0.0, None)],
        method="highs",
    )
    if lp.status != 0 or lp.x[-1] <= 1e-12:
        return 0.0
    if d == 1:
        top = min((b / a[:, 0])[a[:, 0] > 0])
        bottom = max((b / a[:, 0])[a[:, 0] < 0])
        return max(top - bottom, 0.0)
    halfspaces = np.hstack([a, -b[:, None]])
    corners = HalfspaceIntersection(halfspaces, lp.x[:-1]).intersections
    return float(min(ConvexHull(corners).volume, 1.0))


def _inscribed_box(rect: AnisotropicRectangle) -> Tuple[np.ndarray, np.ndarray]:
    """Largest box proportional to the bounding box, centred at the rectangle's centre."""
    sides = np.asarray(rect.sides)
    if rect.is_axis_aligned:
        lo = rect.anchor.as_array()
        return lo, lo + sides
    abs_o = np.abs(rect.rotation.as_array())
    center = rect.anchor.as_array() + rect.rotation.as_array() @ (sides / 2.0)
    widths = abs_o @ (sides / 2.0)
    shrink = float(np.min((sides / 2.0) / (abs_o.T @ widths)))
    half = shrink * widths
    return center - half, center + half


def subcube_level(smallest_side: float, d: int) -> int:
    """p = -floor(log2(l_d / (8 sqrt d)))."""
    return -math.floor(math.log2(smallest_side / (LEVEL_FACTOR * math.sqrt(d))))


@dataclass(frozen=True)
class SubcubeLattice:
    """C(R) as a product lattice: cube j on axis i has index starts[i] + 8 j, 0 <= j < counts[i].

    Ordinals run over the lattice in mixed radix, last axis fastest.
    """

    level: int
    starts: Tuple[int, ...]
    counts: Tuple[int, ...]

    @classmethod
    def empty(cls, d: int) -> "SubcubeLattice":
        return cls(0, (0,) * d, (0,) * d)

    @property
    def d(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.level)

    def __len__(self) -> int:
        return self.size

    def positions(self, ordinal: int) -> Tuple[int, ...]:
        if not (0 <= ordinal < self.size):
            raise InvalidParameterError(f"ordinal {ordinal} outside [0, {self.size - 1}]")
        js = []
        for count in reversed(self.counts):
            ordinal, j = divmod(ordinal, count)
            js.append(j)
        return tuple(reversed(js))

    def ordinal_of(self, positions: Sequence[int]) -> int:
        ordinal = 0
        for j, count in zip(positions, self.counts):
            ordinal = ordinal * count + int(j)
        return ordinal

    def cube(self, ordinal: int) -> DyadicCube:
        js = self.positions(ordinal)
        return DyadicCube(self.level, tuple(s + SPACING_MODULUS * j for s, j in zip(self.starts, js)))

    def ordinal(self, cube: DyadicCube) -> int:
        """Inverse of cube(); raises when the cube is not on the lattice."""
        if cube.level != self.level or cube.d != self.d:
            raise InvalidParameterError(f"cube {cube} is not on a level-{self.level} lattice")
        js = []
        for k, s, count in zip(cube.index, self.starts, self.counts):
            j, rest = divmod(k - s, SPACING_MODULUS)
            if rest or not (0 <= j < count):
                raise InvalidParameterError(f"cube {cube} is not on the lattice")
            js.append(j)
        return self.ordinal_of(js)

    def cubes(self, max_cubes: int = DEFAULT_MAX_SUBCUBES) -> List[DyadicCube]:
        if self.size > max_cubes:
            raise CellBudgetExceeded(self.size, max_cubes, "admissible subcubes")
        return [self.cube(i) for i in range(self.size)]

    def window(
        self, lo: Sequence[float], hi: Sequence[float], inside: bool = False
    ) -> List[Tuple[int, int]]:
        """Per-axis position ranges [first, last] of cubes meeting the open box, or lying in the closed one.

        An empty axis comes back as first > last.
        """
        spans = []
        for a, b, s, count in zip(lo, hi, self.starts, self.counts):
            # scaling by a power of two and subtracting the start are exact
            u = math.ldexp(float(a), self.level) - s
            v = math.ldexp(float(b), self.level) - s
            if inside:
                first, last = math.ceil(u / SPACING_MODULUS), math.floor((v - 1.0) / SPACING_MODULUS)
            else:
                first, last = math.floor((u - 1.0) / SPACING_MODULUS) + 1, math.ceil(v / SPACING_MODULUS) - 1
            spans.append((max(first, 0), min(last, count - 1)))
        return spans

    def count_inside(self, lo: Sequence[float], hi: Sequence[float]) -> int:
        return math.prod(max(last - first + 1, 0) for first, last in self.window(lo, hi, inside=True))

    def partial_ordinals(self, lo: Sequence[float], hi: Sequence[float], limit: int) -> List[int]:
        """Ordinals of cubes meeting the box without lying inside it.

        At most two such positions exist per axis, so the set splits by the first axis
        on which a cube leaves the inside window. Raises when more than limit are found.
        """
        meet = self.window(lo, hi)
        if any(first > last for first, last in meet):
            return []
        inner = self.window(lo, hi, inside=True)
        edges = []
        for (m0, m1), (i0, i1) in zip(meet, inner):
            edges.append(sorted({j for j in (m0, m1) if not (i0 <= j <= i1)}))
        total = math.prod(m1 - m0 + 1 for m0, m1 in meet) - math.prod(max(i1 - i0 + 1, 0) for i0, i1 in inner)
        if total > limit:
            raise CellBudgetExceeded(total, limit, "partially covered subcubes")
        ordinals: List[int] = []
        for k in range(self.d):
            axes = [range(i0, i1 + 1) for i0, i1 in inner[:k]]
            axes.append(edges[k])
            axes.extend(range(m0, m1 + 1) for m0, m1 in meet[k + 1 :])
            ordinals.extend(self.ordinal_of(js) for js in itertools.product(*axes))
        return ordinals


def subcube_lattice(rect: AnisotropicRectangle) -> SubcubeLattice:
    """C(R): level-p dyadic cubes inside R whose indices are all divisible by 8."""
    lo, hi = _inscribed_box(rect)
    lo = np.clip(lo, 0.0, 1.0)
    hi = np.clip(hi, 0.0, 1.0)
    width = float(np.min(hi - lo))
    if width <= 0:
        return SubcubeLattice.empty(rect.d)
    level = subcube_level(rect.smallest_side if rect.is_axis_aligned else width, rect.d)
    if level > MAX_DYADIC_LEVEL:
        raise InvalidParameterError(f"rectangle too thin: subcube level {level} > {MAX_DYADIC_LEVEL}")
    top = (1 << level) - 1
    starts, counts = [], []
    for a, b in zip(lo.tolist(), hi.tolist()):
        first = math.ceil(math.ldexp(a, level))
        first += (-first) % SPACING_MODULUS
        last = min(math.floor(math.ldexp(b, level)) - 1, top)
        if last < first:
            return SubcubeLattice.empty(rect.d)
        starts.append(first)
        counts.append((last - first) // SPACING_MODULUS + 1)
    return SubcubeLattice(level, tuple(starts), tuple(counts))


def admissible_subcubes(
    rect: AnisotropicRectangle, max_cubes: int = DEFAULT_MAX_SUBCUBES
) -> List[DyadicCube]:
    return subcube_lattice(rect).cubes(max_cubes)


def measure_admissible_constant(
    d: int, samples: int, rng: np.random.Generator, max_ratio: float = 64.0
) -> Tuple[float, float]:
    """Observed (min, max) of #C(R) / prod(l_i / l_d) over random axis-aligned rectangles."""
    ratios = []
    for _ in range(samples):
        smallest = math.ldexp(1.0, -int(rng.integers(4, 12)))
        aspect = np.sort(rng.uniform(1.0, max_ratio ** (1.0 / max(d - 1, 1)), size=d))[::-1]
        aspect[-1] = 1.0
        sides = smallest * aspect
        if d > 1 and sides[0] >= 0.5:
            sides = sides * (0.45 / sides[0])
        anchor = rng.uniform(0.0, 1.0 - sides)
        tau = np.log(sides) / math.log(0.5)
        rect = AnisotropicRectangle(
            Point(tuple(anchor)), 0.5, ShrinkProfile(tuple(np.sort(tau))), Rotation.identity(d)
        )
        count = subcube_lattice(rect).size
        expected = float(np.prod(sides / sides.min()))
        if count:
            ratios.append(count / expected)
    if not ratios:
        raise InvalidParameterError("no sampled rectangle contained an admissible cube")
    return min(ratios), max(ratios)


def _cell_ranges(lo: np.ndarray, hi: np.ndarray, level: int) -> List[range]:
    top = (1 << level) - 1
    ranges = []
    for a, b in zip(lo.tolist(), hi.tolist()):
        first = max(math.ceil(math.ldexp(a, level)) - 1, 0)
        last = min(math.floor(math.ldexp(b, level)), top)
        ranges.append(range(first, last + 1))
    return ranges


def rasterize_indices(
    rect: AnisotropicRectangle, level: int, cell_budget: int = DEFAULT_CELL_BUDGET
) -> np.ndarray:
    """Indices (n, d) of the level-p cells whose closed body meets the rectangle."""
    if level < 0 or level > MAX_DYADIC_LEVEL:
        raise InvalidParameterError(f"level {level} outside [0, {MAX_DYADIC_LEVEL}]")
    box_lo, box_hi = rectangle_bounding_box(rect)
    ranges = _cell_ranges(box_lo, box_hi, level)
    total = math.prod(len(r) for r in ranges)
    if total > cell_budget:
        raise CellBudgetExceeded(total, cell_budget)
    if total == 0:
        return np.empty((0, rect.d), dtype=np.int64)
    axes = [np.arange(r.start, r.stop, dtype=np.int64) for r in ranges]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, rect.d)
    if rect.is_axis_aligned:
        return grid
    cell_lo = np.ldexp(grid.astype(float), -level)
    cell_hi = np.ldexp(grid.astype(float) + 1.0, -level)
    return grid[_boxes_meet_rectangle(rect, cell_lo, cell_hi)]


def rasterize_rectangle(
    rect: AnisotropicRectangle, level: int, cell_budget: int = DEFAULT_CELL_BUDGET
) -> FrozenSet[Tuple[int, ...]]:
    return frozenset(map(tuple, rasterize_indices(rect, level, cell_budget).tolist()))


def random_rotation(d: int, rng: np.random.Generator) -> Rotation:
    """Uniform angle in d = 2; QR of a Gaussian matrix with positive R diagonal otherwise."""
    if d == 2:
        return rotation_from_angle(2, float(rng.uniform(0.0, 2.0 * math.pi)))
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))[None, :]
    return Rotation.from_array(q)


def rotation_from_angle(d: int, angle: float) -> Rotation:
    """Rotation by angle in the plane of the first two coordinates."""
    m = np.eye(d)
    if d >= 2:
        c, s = math.cos(angle), math.sin(angle)
        m[0, 0], m[0, 1], m[1, 0], m[1, 1] = c, -s, s, c
    return Rotation.from_array(m)
