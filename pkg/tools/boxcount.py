"""Box-counting of truncated limsup sets and the covering-cost critical exponent."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from config.constants import BISECTION_ITERATIONS, DEFAULT_CELL_BUDGET, MORTON_MAX_BITS
from models.errors import (
    CellBudgetExceeded,
    DegenerateFitError,
    InvalidParameterError,
    NoSignChangeError,
)
from tools.formula import ShrinkProfile, as_profile
from tools.geometry import AnisotropicRectangle, rasterize_indices

logger = logging.getLogger(__name__)

Window = Tuple[float, float]


def scale_matched_window(profile: ShrinkProfile | Sequence[float], level: int, octaves: int = 3) -> Window:
    """Base radii whose thinnest side r^tau_d lies in [2^-p, 2^(-p + octaves)]."""
    profile = as_profile(profile)
    tau_d = profile.largest
    r_min = 2.0 ** (-level / tau_d)
    r_max = min(2.0 ** ((octaves - level) / tau_d), math.nextafter(1.0, 0.0))
    return r_min, r_max


def select_window(rects: Sequence[AnisotropicRectangle], window: Window) -> List[AnisotropicRectangle]:
    r_min, r_max = window
    if r_min > r_max:
        raise InvalidParameterError(f"empty window {window}")
    return [R for R in rects if r_min <= R.base_radius <= r_max]


def morton_encode(indices: np.ndarray, level: int) -> np.ndarray:
    """Interleave the bits of (n, d) cell indices into uint64 keys."""
    indices = np.asarray(indices, dtype=np.uint64)
    n, d = indices.shape
    if d * level > MORTON_MAX_BITS:
        raise InvalidParameterError(f"d*p = {d * level} exceeds {MORTON_MAX_BITS} key bits")
    keys = np.zeros(n, dtype=np.uint64)
    one = np.uint64(1)
    for bit in range(level):
        for axis in range(d):
            value = (indices[:, axis] >> np.uint64(bit)) & one
            keys |= value << np.uint64(bit * d + axis)
    return keys


def _shard_keys(rects: Sequence[AnisotropicRectangle], level: int, cell_budget: int) -> np.ndarray:
    keys = []
    total = 0
    for R in rects:
        cells = rasterize_indices(R, level, cell_budget)
        total += len(cells)
        if total > cell_budget:
            raise CellBudgetExceeded(total, cell_budget)
        keys.append(morton_encode(cells, level))
    if not keys:
        return np.empty(0, dtype=np.uint64)
    return np.unique(np.concatenate(keys))


def count_cells(
    rects: Sequence[AnisotropicRectangle],
    level: int,
    window: Optional[Window] = None,
    threads: int = 1,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> int:
    """Number of distinct level-p cells met by the windowed rectangles."""
    selected = list(rects) if window is None else select_window(rects, window)
    if not selected:
        return 0
    if window is not None and window[1] ** selected[0].profile.largest < 2.0 ** (-level):
        logger.warning("level %d is coarser than the thinnest counted side", level)
    workers = max(1, min(threads, len(selected)))
    chunk = math.ceil(len(selected) / workers)
    shards = [selected[i:i + chunk] for i in range(0, len(selected), chunk)]
    if workers == 1:
        parts = [_shard_keys(shards[0], level, cell_budget)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda shard: _shard_keys(shard, level, cell_budget), shards))
    merged = np.unique(np.concatenate(parts))
    if merged.size > cell_budget:
        raise CellBudgetExceeded(int(merged.size), cell_budget)
    return int(merged.size)


def box_count_table(
    rects: Sequence[AnisotropicRectangle],
    profile: ShrinkProfile | Sequence[float],
    levels: Iterable[int],
    octaves: int = 3,
    threads: int = 1,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> List[Tuple[int, int]]:
    """(p, N_p) with the scale-matched window at every level."""
    profile = as_profile(profile)
    table = []
    for level in levels:
        window = scale_matched_window(profile, level, octaves)
        table.append((level, count_cells(rects, level, window, threads, cell_budget)))
    return table


def fit_box_dimension(
    counts: Sequence[Tuple[int, int]], dimension: Optional[int] = None
) -> Tuple[float, float]:
    """Least-squares slope of log2 N_p against p, with its standard error."""
    if len(counts) < 3:
        raise InvalidParameterError(f"need at least 3 levels, got {len(counts)}")
    levels = np.asarray([p for p, _ in counts], dtype=float)
    values = np.asarray([n for _, n in counts], dtype=float)
    if np.any(values <= 0):
        raise InvalidParameterError("box counts must be positive")
    if np.all(values == values[0]):
        raise DegenerateFitError("box counts are constant across levels")
    y = np.log2(values)
    x_centered = levels - levels.mean()
    sxx = float(x_centered @ x_centered)
    slope = float(x_centered @ (y - y.mean())) / sxx
    residuals = y - y.mean() - slope * x_centered
    dof = len(counts) - 2
    stderr = math.sqrt(float(residuals @ residuals) / dof / sxx) if dof > 0 else 0.0
    if dimension is not None and not (-1e-9 <= slope <= dimension + 1e-9):
        raise InvalidParameterError(f"fitted slope {slope:.4f} outside [0, {dimension}]")
    return slope, stderr


def _cost_offsets(profile: ShrinkProfile) -> np.ndarray:
    """c_k = sum over tau_i < tau_k of (tau_i - tau_k)."""
    tau = profile.as_array()
    diff = tau[None, :] - tau[:, None]
    return np.where(diff < 0, diff, 0.0).sum(axis=1)


def covering_cost_exponent(
    rects: Sequence[AnisotropicRectangle],
    window: Optional[Window],
    s_lo: float,
    s_hi: float,
    threshold: float = 1.0,
    iterations: int = BISECTION_ITERATIONS,
) -> float:
    """Bisect for s with sum_n min_k r_n^(tau_k s + c_k) equal to the threshold."""
    if not s_lo < s_hi:
        raise InvalidParameterError(f"need s_lo < s_hi, got [{s_lo}, {s_hi}]")
    selected = list(rects) if window is None else select_window(rects, window)
    if not selected:
        raise NoSignChangeError("no rectangle inside the window")
    profile = selected[0].profile
    tau = profile.as_array()
    offsets = _cost_offsets(profile)
    log_r = np.log(np.asarray([R.base_radius for R in selected]))
    log_threshold = math.log(threshold)

    def excess(s: float) -> float:
        # log r < 0, so the minimum cost takes the largest exponent
        exponents = (tau * s + offsets).max()
        return float(logsumexp(log_r * exponents)) - log_threshold

    lo, hi = float(s_lo), float(s_hi)
    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo < 0 or f_hi > 0:
        raise NoSignChangeError(f"cost does not cross {threshold} on [{s_lo}, {s_hi}]")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if excess(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
