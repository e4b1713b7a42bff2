"""Ball sequences with mu-full limsup and their shrunk rectangle sequences."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.constants import DEFAULT_CELL_BUDGET, DEFAULT_SAMPLE_DEPTH
from models.errors import InvalidParameterError
from tools.formula import ShrinkProfile, as_profile
from tools.geometry import (
    AnisotropicRectangle,
    Ball,
    DyadicCube,
    Point,
    Rotation,
    from_unit_frame,
    random_rotation,
    rotation_from_angle,
    shrink_ball,
)
from tools.measure import MeasureSpec, cube_mass_grid, dimension, rescale, sample_points

logger = logging.getLogger(__name__)


class SequenceKind(str, Enum):
    IID = "iid"
    JARNIK = "jarnik"
    EXPLICIT = "explicit"


class RotationPolicy(str, Enum):
    IDENTITY = "identity"
    FIXED_ANGLES = "fixed_angles"
    RANDOM_ORTHOGONAL = "random_orthogonal"


class BallSequenceSpec(BaseModel):
    """How the base balls B_n = B(x_n, r_n) are produced."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: SequenceKind = SequenceKind.IID
    count: int = Field(default=10_000, ge=0)
    # i.i.d.: r_n = radius_scale * n^(-1/gamma); gamma defaults to dim(mu)
    radius_scale: float = Field(default=0.5, gt=0.0, le=1.0)
    gamma: Optional[float] = Field(default=None, gt=0.0)
    depth: int = Field(default=DEFAULT_SAMPLE_DEPTH, ge=1, le=52)
    # Jarnik: reduced p/q with radius q^-2
    min_denominator: int = Field(default=1, ge=1)
    # explicit list
    centers: Tuple[Tuple[float, ...], ...] = ()
    radii: Tuple[float, ...] = ()
    rotation_policy: RotationPolicy = RotationPolicy.IDENTITY
    angles: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check_lists(self) -> "BallSequenceSpec":
        if len(self.centers) != len(self.radii):
            raise ValueError("centers and radii must have the same length")
        for c in self.centers:
            if any(not (0.0 <= v <= 1.0) for v in c):
                raise ValueError(f"center {c} is outside [0,1]^d")
        if any(r < 0 for r in self.radii):
            raise ValueError("radii must be non-negative")
        if self.rotation_policy is RotationPolicy.FIXED_ANGLES and not self.angles:
            raise ValueError("fixed_angles rotation policy needs at least one angle")
        return self


def jarnik_fractions(count: int, min_denominator: int = 1) -> List[Tuple[int, int]]:
    """The first count reduced fractions p/q in [0,1], ordered by q then p."""
    fractions: List[Tuple[int, int]] = []
    q = min_denominator
    while len(fractions) < count:
        for p in range(q + 1):
            if math.gcd(p, q) == 1:
                fractions.append((p, q))
                if len(fractions) == count:
                    break
        q += 1
    return fractions


def generate_balls(
    spec: BallSequenceSpec,
    mu: MeasureSpec,
    n: int,
    rng: np.random.Generator,
    offset: int = 0,
) -> List[Ball]:
    """The first n balls of the sequence, starting after offset terms (i.i.d. only)."""
    if n < 1:
        raise InvalidParameterError(f"need at least one ball, got n={n}")
    if spec.kind is SequenceKind.IID:
        alpha = dimension(mu)
        gamma = spec.gamma if spec.gamma is not None else alpha
        if gamma < alpha:
            logger.warning(
                "gamma=%g < dim(mu)=%g: sum of mu(B_n) may converge, limsup need not be full",
                gamma,
                alpha,
            )
        centers = sample_points(mu, rng, n, spec.depth)
        index = np.arange(offset + 1, offset + n + 1, dtype=float)
        radii = spec.radius_scale * index ** (-1.0 / gamma)
        return [Ball(Point(tuple(c)), float(r)) for c, r in zip(centers.tolist(), radii.tolist())]
    if spec.kind is SequenceKind.JARNIK:
        if mu.d != 1:
            raise InvalidParameterError("the Jarnik sequence lives in dimension 1")
        return [
            Ball(Point((p / q,)), 1.0 / (q * q))
            for p, q in jarnik_fractions(n, spec.min_denominator)
        ]
    if any(len(c) != mu.d for c in spec.centers):
        raise InvalidParameterError(f"explicit centers must have dimension {mu.d}")
    return [Ball(Point(c), r) for c, r in zip(spec.centers[:n], spec.radii[:n])]


def _rotation_for(
    index: int,
    d: int,
    policy: RotationPolicy,
    rng: Optional[np.random.Generator],
    angles: Sequence[float],
) -> Rotation:
    if policy is RotationPolicy.IDENTITY:
        return Rotation.identity(d)
    if policy is RotationPolicy.FIXED_ANGLES:
        return rotation_from_angle(d, angles[index % len(angles)])
    if rng is None:
        raise InvalidParameterError("random orthogonal rotations need a seeded generator")
    return random_rotation(d, rng)


def shrink_sequence(
    balls: Sequence[Ball],
    profile: ShrinkProfile | Sequence[float],
    rotation_policy: RotationPolicy = RotationPolicy.IDENTITY,
    rng: Optional[np.random.Generator] = None,
    angles: Sequence[float] = (),
) -> List[AnisotropicRectangle]:
    profile = as_profile(profile)
    if rotation_policy is RotationPolicy.FIXED_ANGLES and not angles:
        raise InvalidParameterError("fixed_angles rotation policy needs at least one angle")
    rects = []
    for i, ball in enumerate(balls):
        if ball.radius >= 1.0:
            raise InvalidParameterError(f"ball {i} has radius {ball.radius} >= 1")
        rotation = _rotation_for(i, ball.d, rotation_policy, rng, angles)
        rects.append(shrink_ball(ball, profile, rotation))
    return rects


def ball_stream_for_cube(
    spec: BallSequenceSpec,
    mu: MeasureSpec,
    cube: DyadicCube,
    count: int,
    rng: np.random.Generator,
    max_radius: float,
) -> List[Ball]:
    """Candidate balls centred in the cube with radius at most max_radius."""
    side = cube.side
    lower, upper = cube.lower(), cube.upper()
    if spec.kind is SequenceKind.IID:
        alpha = dimension(mu)
        gamma = spec.gamma if spec.gamma is not None else alpha
        # skip the terms whose rescaled radius is still too large
        offset = max(0, math.ceil((spec.radius_scale * side / max_radius) ** gamma) - 1)
        local = generate_balls(spec, rescale(mu, cube), count, rng, offset=offset)
        return [
            Ball(Point(tuple(from_unit_frame(cube, b.center.coords).tolist())), b.radius * side)
            for b in local
        ]
    if spec.kind is SequenceKind.JARNIK:
        if mu.d != 1:
            raise InvalidParameterError("the Jarnik sequence lives in dimension 1")
        balls: List[Ball] = []
        q = max(spec.min_denominator, math.ceil(math.sqrt(1.0 / max_radius)))
        a, b = float(lower[0]), float(upper[0])
        while len(balls) < count:
            for p in range(math.ceil(a * q), math.floor(b * q) + 1):
                if math.gcd(p, q) == 1:
                    balls.append(Ball(Point((p / q,)), 1.0 / (q * q)))
                    if len(balls) == count:
                        break
            q += 1
        return balls
    selected = []
    for c, r in zip(spec.centers, spec.radii):
        x = np.asarray(c)
        if r <= max_radius and np.all(x >= lower) and np.all(x <= upper):
            selected.append(Ball(Point(c), r))
            if len(selected) == count:
                break
    return selected


@dataclass
class CoverageReport:
    level: int
    tail_starts: List[int] = field(default_factory=list)
    covered_mass: List[float] = field(default_factory=list)
    mass_upper_sum: float = 0.0

    def as_rows(self) -> List[dict]:
        return [
            {"tail_start": n, "covered_mass": m}
            for n, m in zip(self.tail_starts, self.covered_mass)
        ]


def _dyadic_ladder(n: int) -> List[int]:
    ladder, start = [], 1
    while start <= n:
        ladder.append(start)
        start *= 2
    return ladder


def coverage_diagnostics(
    mu: MeasureSpec,
    balls: Sequence[Ball],
    level: int,
    cell_budget: int = DEFAULT_CELL_BUDGET,
    ladder: Optional[Sequence[int]] = None,
) -> CoverageReport:
    """mu-mass of the level-p cubes met by the tails of the sequence, tail starts 1, 2, 4, ..."""
    masses = cube_mass_grid(mu, level, cell_budget)
    covered = np.zeros(masses.shape, dtype=bool)
    starts = sorted(set(ladder if ladder is not None else _dyadic_ladder(len(balls))), reverse=True)
    top = (1 << level) - 1
    report = CoverageReport(level=level)
    snapshots = {}
    upper_parts = []
    # tails starting past the end are empty and keep mass 0
    pending = [n for n in starts if 1 <= n <= len(balls)]
    for n in range(len(balls), 0, -1):
        a, b = balls[n - 1].bounds()
        lo = np.clip(np.floor(np.ldexp(a, level)).astype(np.int64), 0, top)
        hi = np.clip(np.ceil(np.ldexp(b, level)).astype(np.int64) - 1, 0, top)
        if np.all(hi >= lo):
            window = tuple(slice(int(l), int(h) + 1) for l, h in zip(lo, hi))
            covered[window] = True
            upper_parts.append(float(masses[window].sum()))
        while pending and pending[0] == n:
            snapshots[n] = float(masses[covered].sum())
            pending.pop(0)
    for n in sorted(set(starts)):
        report.tail_starts.append(n)
        report.covered_mass.append(snapshots.get(n, 0.0))
    report.mass_upper_sum = math.fsum(upper_parts)
    return report
