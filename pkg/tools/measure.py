"""Quasi-Bernoulli measures on the dyadic grid of [0,1]^d.

A measure is described by a chain over the 2^d child symbols: the symbol of a child
has bit i equal to the new binary digit of coordinate i. Lebesgue and Bernoulli
measures are the memoryless special cases of the Markov description.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from config.constants import (
    DEFAULT_CELL_BUDGET,
    DEFAULT_SAMPLE_DEPTH,
    STATIONARY_TOLERANCE,
    STOCHASTIC_TOLERANCE,
)
from models.errors import CellBudgetExceeded, InvalidParameterError, MassFloorError
from tools.geometry import Ball, DyadicCube, Point, to_unit_frame

logger = logging.getLogger(__name__)

# Below this many cells a box mass is read from the full level grid.
_GRID_FAST_PATH = 1 << 16
_MAX_POWER_ITERATIONS = 1_000_000


class MeasureKind(str, Enum):
    LEBESGUE = "lebesgue"
    BERNOULLI = "bernoulli"
    MARKOV = "markov"


class MeasureSpec(BaseModel):
    """Serializable description of a fully supported quasi-Bernoulli measure."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: MeasureKind
    d: int
    weights: Optional[Tuple[float, ...]] = None
    initial: Optional[Tuple[float, ...]] = None
    transition: Optional[Tuple[Tuple[float, ...], ...]] = None

    @model_validator(mode="after")
    def _check_parameters(self) -> "MeasureSpec":
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        symbols = 1 << self.d
        if self.kind is MeasureKind.LEBESGUE:
            if self.weights or self.initial or self.transition:
                raise ValueError("a Lebesgue measure takes no weights")
        elif self.kind is MeasureKind.BERNOULLI:
            if self.weights is None or self.initial or self.transition:
                raise ValueError("a Bernoulli measure takes exactly one weight vector")
            _check_distribution(self.weights, symbols, "weights")
        else:
            if self.initial is None or self.transition is None or self.weights:
                raise ValueError("a Markov measure takes an initial distribution and a transition matrix")
            _check_distribution(self.initial, symbols, "initial")
            if len(self.transition) != symbols:
                raise ValueError(f"transition needs {symbols} rows, got {len(self.transition)}")
            for i, row in enumerate(self.transition):
                _check_distribution(row, symbols, f"transition row {i}")
        return self

    @classmethod
    def lebesgue(cls, d: int) -> "MeasureSpec":
        return cls(kind=MeasureKind.LEBESGUE, d=d)

    @classmethod
    def bernoulli(cls, weights: Sequence[float]) -> "MeasureSpec":
        d = int(round(math.log2(len(weights)))) if weights else 0
        return cls(kind=MeasureKind.BERNOULLI, d=d, weights=tuple(float(w) for w in weights))

    @classmethod
    def markov(cls, initial: Sequence[float], transition: Sequence[Sequence[float]]) -> "MeasureSpec":
        d = int(round(math.log2(len(initial)))) if initial else 0
        return cls(
            kind=MeasureKind.MARKOV,
            d=d,
            initial=tuple(float(w) for w in initial),
            transition=tuple(tuple(float(w) for w in row) for row in transition),
        )

    @property
    def symbols(self) -> int:
        return 1 << self.d


def _check_distribution(values: Sequence[float], size: int, name: str) -> None:
    if len(values) != size:
        raise ValueError(f"{name} needs {size} entries, got {len(values)}")
    if any(not (w > 0) or not math.isfinite(w) for w in values):
        raise ValueError(f"{name} must be strictly positive (full support): {tuple(values)}")
    if abs(math.fsum(values) - 1.0) > STOCHASTIC_TOLERANCE:
        raise ValueError(f"{name} must sum to 1, got {math.fsum(values)!r}")


@dataclass(frozen=True)
class ESetParams:
    """Parameters of E^{alpha, epsilon, rho}: mu(B(x, r)) <= constant * r^(alpha - epsilon)."""

    alpha: float
    epsilon: float
    rho: float
    probe_depth: int
    resolution: int = 4
    constant: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise InvalidParameterError(f"alpha must be >= 0, got {self.alpha}")
        if not (0 < self.epsilon <= self.alpha):
            raise InvalidParameterError(f"epsilon must lie in (0, alpha], got {self.epsilon}")
        if not (0 < self.rho <= 1):
            raise InvalidParameterError(f"rho must lie in (0, 1], got {self.rho}")
        if self.probe_depth < self.first_probe:
            raise InvalidParameterError(
                f"probe_depth {self.probe_depth} < ceil(log2(1/rho)) = {self.first_probe}"
            )
        if self.resolution < 0 or self.constant <= 0:
            raise InvalidParameterError("resolution must be >= 0 and constant > 0")

    @property
    def first_probe(self) -> int:
        return max(0, math.ceil(-math.log2(self.rho)))


@lru_cache(maxsize=64)
def _chain(mu: MeasureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(initial, transition) arrays of the symbol chain; read-only."""
    if mu.kind is MeasureKind.LEBESGUE:
        initial = np.full(mu.symbols, 1.0 / mu.symbols)
        transition = np.tile(initial, (mu.symbols, 1))
    elif mu.kind is MeasureKind.BERNOULLI:
        initial = np.asarray(mu.weights, dtype=float)
        transition = np.tile(initial, (mu.symbols, 1))
    else:
        initial = np.asarray(mu.initial, dtype=float)
        transition = np.asarray(mu.transition, dtype=float)
    initial.setflags(write=False)
    transition.setflags(write=False)
    return initial, transition


def _symbol_grid(d: int) -> np.ndarray:
    grid = np.zeros((2,) * d, dtype=np.int64)
    for e in np.ndindex(*grid.shape):
        grid[e] = sum(bit << i for i, bit in enumerate(e))
    return grid


def cube_mass(mu: MeasureSpec, cube: DyadicCube) -> float:
    if cube.d != mu.d:
        raise InvalidParameterError(f"cube dimension {cube.d} != measure dimension {mu.d}")
    if mu.kind is MeasureKind.LEBESGUE:
        return math.ldexp(1.0, -mu.d * cube.level)
    initial, transition = _chain(mu)
    mass = 1.0
    previous = None
    for symbol in cube.digits():
        mass *= initial[symbol] if previous is None else transition[previous, symbol]
        previous = symbol
    return float(mass)


def cube_mass_grid(mu: MeasureSpec, level: int, cell_budget: int = DEFAULT_CELL_BUDGET) -> np.ndarray:
    """Masses of every level-p cube as a read-only array of shape (2^p,) * d."""
    total = 1 << (mu.d * level)
    if total > cell_budget:
        raise CellBudgetExceeded(total, cell_budget, "mass grid")
    return _cube_mass_grid(mu, level)


@lru_cache(maxsize=16)
def _cube_mass_grid(mu: MeasureSpec, level: int) -> np.ndarray:
    d = mu.d
    if mu.kind is MeasureKind.LEBESGUE:
        grid = np.full((1 << level,) * d, math.ldexp(1.0, -d * level))
        grid.setflags(write=False)
        return grid
    initial, transition = _chain(mu)
    symbols = _symbol_grid(d)
    mass = np.ones((1,) * d)
    last: Optional[np.ndarray] = None
    for _ in range(level):
        expanded = mass
        for axis in range(d):
            expanded = np.repeat(expanded, 2, axis=axis)
        current = np.tile(symbols, mass.shape)
        if last is None:
            factor = initial[current]
        else:
            previous = last
            for axis in range(d):
                previous = np.repeat(previous, 2, axis=axis)
            factor = transition[previous, current]
        mass = expanded * factor
        last = current
    mass.setflags(write=False)
    return mass


def box_mass(mu: MeasureSpec, lo: Sequence[int], hi: Sequence[int], level: int) -> float:
    """Total mass of the level-p cubes with lo_i <= k_i <= hi_i (inclusive)."""
    lo = [max(int(k), 0) for k in lo]
    hi = [min(int(k), (1 << level) - 1) for k in hi]
    if any(a > b for a, b in zip(lo, hi)):
        return 0.0
    count = math.prod(b - a + 1 for a, b in zip(lo, hi))
    if mu.kind is MeasureKind.LEBESGUE:
        return count * math.ldexp(1.0, -mu.d * level)
    if (1 << (mu.d * level)) <= _GRID_FAST_PATH:
        grid = _cube_mass_grid(mu, level)
        window = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        return math.fsum(grid[window].ravel().tolist())

    initial, transition = _chain(mu)
    parts: List[float] = []
    # (generation, index, mass, last symbol)
    stack = [(0, tuple([0] * mu.d), 1.0, -1)]
    while stack:
        q, index, mass, last = stack.pop()
        shift = level - q
        inside = True
        disjoint = False
        for k, a, b in zip(index, lo, hi):
            first, final = k << shift, ((k + 1) << shift) - 1
            if final < a or first > b:
                disjoint = True
                break
            if first < a or final > b:
                inside = False
        if disjoint:
            continue
        if inside:
            parts.append(mass)
            continue
        row = initial if last < 0 else transition[last]
        for symbol in range(mu.symbols):
            child = tuple(2 * k + ((symbol >> i) & 1) for i, k in enumerate(index))
            stack.append((q + 1, child, mass * row[symbol], symbol))
    return math.fsum(parts)


def ball_mass_bounds(
    mu: MeasureSpec, ball: Ball, level: int, cell_budget: int = DEFAULT_CELL_BUDGET
) -> Tuple[float, float]:
    """Dyadic bracket of mu(B): cubes inside B below, cubes whose interior meets B above.

    Cube faces carry no mass for a fully supported measure without atoms, so the upper
    sum only needs cubes whose interior meets the ball.
    """
    if ball.d != mu.d:
        raise InvalidParameterError(f"ball dimension {ball.d} != measure dimension {mu.d}")
    a, b = ball.bounds()
    scaled_a = np.ldexp(a, level)
    scaled_b = np.ldexp(b, level)
    inner_lo = np.ceil(scaled_a).astype(np.int64)
    inner_hi = np.floor(scaled_b).astype(np.int64) - 1
    outer_lo = np.floor(scaled_a).astype(np.int64)
    outer_hi = np.ceil(scaled_b).astype(np.int64) - 1
    top = (1 << level) - 1
    outer_cells = math.prod(
        max(0, min(int(h), top) - max(int(l), 0) + 1) for l, h in zip(outer_lo, outer_hi)
    )
    if outer_cells > cell_budget:
        raise CellBudgetExceeded(outer_cells, cell_budget, "ball bracket")
    lower = box_mass(mu, inner_lo.tolist(), inner_hi.tolist(), level)
    upper = box_mass(mu, outer_lo.tolist(), outer_hi.tolist(), level)
    return lower, upper


def stationary_distribution(mu: MeasureSpec) -> np.ndarray:
    initial, transition = _chain(mu)
    if mu.kind is not MeasureKind.MARKOV:
        return initial.copy()
    v = initial.copy()
    for _ in range(_MAX_POWER_ITERATIONS):
        nxt = v @ transition
        if np.max(np.abs(nxt - v)) < STATIONARY_TOLERANCE:
            return nxt / nxt.sum()
        v = nxt
    logger.warning("power iteration did not reach %.1e; using last iterate", STATIONARY_TOLERANCE)
    return v / v.sum()


def dimension(mu: MeasureSpec) -> float:
    """Almost sure local dimension: entropy (rate) in bits per halving of the side."""
    if mu.kind is MeasureKind.LEBESGUE:
        return float(mu.d)
    initial, transition = _chain(mu)
    if mu.kind is MeasureKind.BERNOULLI:
        return float(-np.sum(initial * np.log2(initial)))
    pi = stationary_distribution(mu)
    row_entropy = -np.sum(transition * np.log2(transition), axis=1)
    return float(pi @ row_entropy)


def rescale(mu: MeasureSpec, cube: DyadicCube) -> MeasureSpec:
    """mu^D = T_D(mu restricted to D, normalised)."""
    if mu.kind is not MeasureKind.MARKOV or cube.level == 0:
        return mu
    last = cube.digits()[-1]
    return mu.model_copy(update={"initial": tuple(mu.transition[last])})


def quasi_bernoulli_constant(mu: MeasureSpec, probe_level: int = 3) -> float:
    """C_mu as the largest two-sided ratio between mu^D and mu on the level-probe_level cubes.

    Exact over all D: mu^D depends only on the last symbol of D, so the level-1 cubes
    already realise every rescaled measure.
    """
    if probe_level < 1:
        raise InvalidParameterError(f"probe_level must be >= 1, got {probe_level}")
    if mu.kind is not MeasureKind.MARKOV:
        return 1.0
    reference = _cube_mass_grid(mu, probe_level)
    worst = 1.0
    for symbol in range(mu.symbols):
        cube = DyadicCube(1, tuple((symbol >> i) & 1 for i in range(mu.d)))
        ratio = _cube_mass_grid(rescale(mu, cube), probe_level) / reference
        worst = max(worst, float(ratio.max()), float((1.0 / ratio).max()))
    return worst


def _sample_symbols(mu: MeasureSpec, rng: np.random.Generator, n: int, depth: int) -> np.ndarray:
    initial, transition = _chain(mu)
    cum_initial = np.cumsum(initial)
    cum_transition = np.cumsum(transition, axis=1)
    top = mu.symbols - 1
    symbols = np.empty((n, depth), dtype=np.int64)
    u = rng.random(n)
    symbols[:, 0] = np.minimum(np.searchsorted(cum_initial, u, side="right"), top)
    for j in range(1, depth):
        u = rng.random(n)
        rows = cum_transition[symbols[:, j - 1]]
        symbols[:, j] = np.minimum((u[:, None] >= rows).sum(axis=1), top)
    return symbols


def sample_points(
    mu: MeasureSpec, rng: np.random.Generator, n: int, depth: int = DEFAULT_SAMPLE_DEPTH
) -> np.ndarray:
    """n points whose level-depth cubes follow the cube masses, uniform inside the cube."""
    if not (1 <= depth <= 52):
        raise InvalidParameterError(f"depth must lie in [1, 52], got {depth}")
    symbols = _sample_symbols(mu, rng, n, depth)
    weights = np.left_shift(np.int64(1), np.arange(depth - 1, -1, -1, dtype=np.int64))
    coords = np.empty((n, mu.d), dtype=float)
    for i in range(mu.d):
        digits = (symbols >> i) & 1
        index = digits @ weights
        coords[:, i] = np.ldexp(index.astype(float) + rng.random(n), -depth)
    return coords


def sample_point(mu: MeasureSpec, rng: np.random.Generator, depth: int = DEFAULT_SAMPLE_DEPTH) -> Point:
    return Point(tuple(sample_points(mu, rng, 1, depth)[0].tolist()))


def local_dimension_fit(
    mu: MeasureSpec, rng: np.random.Generator, samples: int = 2000, depth: int = 20
) -> float:
    """Slope of the mean of -log2 mu(D_j(x)) against j for mu-typical x."""
    initial, transition = _chain(mu)
    symbols = _sample_symbols(mu, rng, samples, depth)
    logs = np.empty((samples, depth))
    logs[:, 0] = np.log2(initial[symbols[:, 0]])
    logs[:, 1:] = np.log2(transition[symbols[:, :-1], symbols[:, 1:]])
    mean_info = -np.cumsum(logs, axis=1).mean(axis=0)
    levels = np.arange(1, depth + 1, dtype=float)
    slope, _ = np.polyfit(levels, mean_info, 1)
    return float(slope)


def e_set_member(mu: MeasureSpec, x: Point | Sequence[float], params: ESetParams) -> bool:
    """One-sided test of x in E^{alpha, epsilon, rho} on dyadic radii 2^-j <= rho."""
    center = x if isinstance(x, Point) else Point(tuple(x))
    coords = center.as_array()
    exponent = params.alpha - params.epsilon
    for j in range(params.first_probe, params.probe_depth + 1):
        r = math.ldexp(1.0, -j)
        if np.any(coords - r < 0.0) or np.any(coords + r > 1.0):
            return False
        _, upper = ball_mass_bounds(mu, Ball(center, r), j + params.resolution)
        if upper > params.constant * r**exponent:
            return False
    return True


def e_set_member_in_cube(
    mu: MeasureSpec, cube: DyadicCube, y: Point | Sequence[float], params: ESetParams
) -> bool:
    """Membership of y in the cube-relative set E_D, tested on mu^D at T_D(y)."""
    coords = y.coords if isinstance(y, Point) else tuple(y)
    local = to_unit_frame(cube, coords)
    if np.any(local < 0.0) or np.any(local > 1.0):
        return False
    return e_set_member(rescale(mu, cube), Point(tuple(local.tolist())), params)


def choose_rho(
    mu: MeasureSpec,
    epsilon: float,
    rng: np.random.Generator,
    samples: int = 200,
    probe_span: int = 6,
    min_fraction: float = 0.5,
    max_halvings: int = 12,
    constant: float = 1.0,
    resolution: int = 4,
) -> Tuple[float, float]:
    """Halve rho until at least min_fraction of mu-samples land in the E-set.

    Raises MassFloorError carrying the best accepted fraction when max_halvings is exhausted.
    """
    alpha = dimension(mu)
    points = sample_points(mu, rng, samples)
    rho, fraction = 0.5, 0.0
    for _ in range(max_halvings):
        params = ESetParams(
            alpha=alpha,
            epsilon=min(epsilon, alpha),
            rho=rho,
            probe_depth=math.ceil(-math.log2(rho)) + probe_span,
            resolution=resolution,
            constant=constant,
        )
        accepted = sum(e_set_member(mu, Point(tuple(p)), params) for p in points.tolist())
        fraction = accepted / samples
        if fraction >= min_fraction:
            logger.debug("rho=%g accepts %.3f of samples for epsilon=%g", rho, fraction, epsilon)
            return rho, fraction
        rho /= 2.0
    raise MassFloorError(
        fraction, min_fraction, where=f"the E-set at rho={2.0 * rho:g} (epsilon={epsilon:g})"
    )
