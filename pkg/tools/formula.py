"""The dimension bound s(mu, tau), the auxiliary function f(v) and its reductions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from models.errors import InvalidParameterError


@dataclass(frozen=True)
class ShrinkProfile:
    """Shrinking exponents 1 <= tau_1 <= ... <= tau_d."""

    exponents: Tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(t) for t in self.exponents)
        object.__setattr__(self, "exponents", values)
        if not values:
            raise InvalidParameterError("shrink profile needs at least one exponent")
        if any(not math.isfinite(t) for t in values):
            raise InvalidParameterError(f"non-finite exponent in {values}")
        if values[0] < 1.0:
            raise InvalidParameterError(f"tau_1 = {values[0]} < 1 is not allowed")
        if any(a > b for a, b in zip(values, values[1:])):
            raise InvalidParameterError(f"exponents must be sorted non-decreasing: {values}")

    @classmethod
    def isotropic(cls, tau: float, d: int) -> "ShrinkProfile":
        return cls(tuple([float(tau)] * d))

    @property
    def d(self) -> int:
        return len(self.exponents)

    @property
    def largest(self) -> float:
        return self.exponents[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.exponents, dtype=float)


def as_profile(value: ShrinkProfile | Iterable[float]) -> ShrinkProfile:
    if isinstance(value, ShrinkProfile):
        return value
    return ShrinkProfile(tuple(value))


def _check_alpha(alpha: float, d: int) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha <= d) or not math.isfinite(alpha):
        raise InvalidParameterError(f"alpha = {alpha} outside [0, {d}]")
    return alpha


def s_value(alpha: float, profile: ShrinkProfile | Iterable[float]) -> Tuple[float, int]:
    """Return ``(s, k)`` with s the minimum over k and k the smallest (1-based) minimiser."""
    profile = as_profile(profile)
    alpha = _check_alpha(alpha, profile.d)
    tau = profile.exponents
    best, best_k = math.inf, 0
    for k in range(1, profile.d + 1):
        tau_k = tau[k - 1]
        value = (alpha + sum(tau_k - tau[j] for j in range(k))) / tau_k
        if value < best:
            best, best_k = value, k
    return best, best_k


def f_of_v(alpha: float, profile: ShrinkProfile | Iterable[float], v: float) -> float:
    """(alpha + sum over tau_i < v of (v - tau_i)) / v on [1, tau_d]."""
    profile = as_profile(profile)
    if not (1.0 <= v <= profile.largest):
        raise InvalidParameterError(f"v = {v} outside [1, {profile.largest}]")
    excess = sum(v - t for t in profile.exponents if t < v)
    return (float(alpha) + excess) / v


def _grid_candidates(tau: np.ndarray, step: float) -> np.ndarray:
    """Breakpoints, the ends and the grid points on both sides of every breakpoint.

    f is monotone between consecutive breakpoints, so the grid minimum sits on one of these.
    Rows of tau are sorted profiles. One extra point on each side absorbs rounding in the floor.
    """
    largest = tau[:, -1:]
    top = np.floor((largest - 1.0) / step)
    below = np.minimum(np.floor((tau - 1.0) / step), top)
    near = [np.clip(below + k, 0.0, top) for k in (-1.0, 0.0, 1.0, 2.0)]
    indices = np.concatenate([*near, np.zeros_like(top), top], axis=1)
    grid = 1.0 + step * indices
    # a grid point rounded past tau_d is not on the grid
    grid = np.where(grid <= largest, grid, 1.0)
    return np.concatenate([tau, grid], axis=1)


def s_by_grid_batch(
    alphas: Sequence[float], profiles: Sequence[ShrinkProfile | Iterable[float]], step: float
) -> np.ndarray:
    """s_by_grid over many instances at once; profiles of different dimensions are allowed."""
    if step <= 0:
        raise InvalidParameterError(f"step must be positive, got {step}")
    parsed = [as_profile(p) for p in profiles]
    if len(parsed) != len(alphas):
        raise InvalidParameterError(f"{len(alphas)} alphas for {len(parsed)} profiles")
    if not parsed:
        return np.empty(0)
    alpha = np.asarray([_check_alpha(a, p.d) for a, p in zip(alphas, parsed)], dtype=float)
    width = max(p.d for p in parsed)
    # repeating tau_d adds nothing to the excess on [1, tau_d]
    tau = np.asarray([p.exponents + (p.largest,) * (width - p.d) for p in parsed], dtype=float)
    v = _grid_candidates(tau, step)
    excess = np.clip(v[:, :, None] - tau[:, None, :], 0.0, None).sum(axis=2)
    return ((alpha[:, None] + excess) / v).min(axis=1)


def s_by_grid(alpha: float, profile: ShrinkProfile | Iterable[float], step: float) -> float:
    """Minimum of f over the grid {1, 1+step, ..., tau_d} together with every tau_i."""
    return float(s_by_grid_batch([alpha], [profile], step)[0])


def jarnik_case(tau: float) -> float:
    """Dimension 1/tau of the points tau-approximable by rationals."""
    if tau < 1:
        raise InvalidParameterError(f"tau = {tau} < 1")
    return s_value(1.0, ShrinkProfile((float(tau),)))[0]


def lebesgue_case(profile: ShrinkProfile | Iterable[float]) -> float:
    profile = as_profile(profile)
    return s_value(float(profile.d), profile)[0]


def isotropic_case(alpha: float, tau: float, d: int) -> float:
    return s_value(alpha, ShrinkProfile.isotropic(tau, d))[0]


def f_scan(
    alpha: float, profile: ShrinkProfile | Iterable[float], points: int = 101
) -> List[Tuple[float, float]]:
    """Evenly spaced (v, f(v)) pairs on [1, tau_d], breakpoints tau_i included."""
    profile = as_profile(profile)
    grid: Sequence[float] = sorted(
        set(np.linspace(1.0, profile.largest, max(points, 2)).tolist()) | set(profile.exponents)
    )
    return [(v, f_of_v(alpha, profile, v)) for v in grid]
