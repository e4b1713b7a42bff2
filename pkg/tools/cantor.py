"""Finite-depth Cantor construction inside limsup R_n, the measure eta and its certificates.

Each generation selects, inside every host dyadic cube D, disjoint balls L = B(x, 4r)
around centres of the ball stream, shrinks the matching base balls into rectangles
and splits eta(D) among them proportionally to mu(L). The next host cubes are the
admissible subcubes C(R) of every selected rectangle, sharing eta(R) equally.

C(R) can hold millions of cubes two generations down, so a host cube is only
selected in when something asks for it. Selections are seeded per cube, which makes
the tree the same whatever order its cubes are expanded in. The depth-P measure
eta_P spreads each leaf's mass uniformly over the leaf rectangle.
"""
from __future__ import annotations

import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config.constants import CONSERVATION_TOLERANCE, MAX_DYADIC_LEVEL
from models.errors import CellBudgetExceeded, InvalidParameterError, MassFloorError
from tools.formula import ShrinkProfile, as_profile, s_value
from tools.geometry import (
    AnisotropicRectangle,
    Ball,
    DyadicCube,
    Point,
    SubcubeLattice,
    rectangle_box_fraction,
    rectangle_inside_box,
    rectangle_intersects_box,
    rectangle_vertices,
    scale_ball,
    subcube_lattice,
    to_unit_frame,
)
from tools.measure import (
    ESetParams,
    MeasureSpec,
    ball_mass_bounds,
    choose_rho,
    cube_mass,
    dimension,
    e_set_member_in_cube,
    rescale,
)
from tools.sequence import BallSequenceSpec, RotationPolicy, ball_stream_for_cube, shrink_sequence

logger = logging.getLogger(__name__)

_EXHAUSTIVE_VITALI_LIMIT = 1000
_AUDIT_SLACK = 1e-9
# choose_rho accepts a rho once this share of mu-samples is in the E-set
_E_SET_ACCEPTANCE = 0.5
_PARTIAL_LIMIT = 1 << 16


@dataclass(frozen=True)
class EpsilonSchedule:
    """epsilon_p = eps0 * 2^-p."""

    eps0: float

    def __post_init__(self) -> None:
        if not (0.0 < self.eps0 <= 1.0):
            raise InvalidParameterError(f"eps0 must lie in (0, 1], got {self.eps0}")

    def epsilon(self, p: int) -> float:
        return math.ldexp(self.eps0, -p)

    def check_against(self, s: float) -> None:
        if self.eps0 > min(1.0, s / 4.0):
            raise InvalidParameterError(f"eps0 = {self.eps0} exceeds min(1, s/4) = {min(1.0, s / 4.0)}")


@dataclass
class CantorSettings:
    candidates_per_cube: int = 256
    # a cube short of the mass floor retries with twice the candidates, up to this many
    max_candidates: int = 4096
    mass_floor: float = 0.1
    probe_span: int = 4
    resolution: int = 3
    rho_samples: int = 128
    # stand-in for the constant in mu(B(x, r)) <= C r^(alpha - epsilon); None means 2^d
    e_set_constant: Optional[float] = None
    enforce_size_conditions: bool = False
    # a generation with more host cubes than this is expanded on demand
    eager_cubes: int = 8192
    # eta-random root-to-leaf paths materialised at build time
    probe_paths: int = 32
    # new host cubes a single ball query may expand
    max_expansions: int = 16
    # count the eta(R) and eta(D) power bounds towards AuditReport.passed
    strict_bounds: bool = False
    threads: int = 1
    progress: bool = False

    def __post_init__(self) -> None:
        if not (0.0 < self.mass_floor <= 1.0):
            raise InvalidParameterError(f"mass_floor must lie in (0, 1], got {self.mass_floor}")
        if self.candidates_per_cube < 1 or self.probe_span < 0 or self.resolution < 0:
            raise InvalidParameterError("candidates_per_cube >= 1, probe_span >= 0 and resolution >= 0")
        if self.max_candidates < self.candidates_per_cube:
            raise InvalidParameterError("max_candidates must be >= candidates_per_cube")
        if self.eager_cubes < 0 or self.probe_paths < 0 or self.max_expansions < 0:
            raise InvalidParameterError("eager_cubes, probe_paths and max_expansions must be >= 0")


@dataclass
class SelectionConstraints:
    alpha: float
    eta_cube: float
    next_rho: float
    mass_floor: float = 0.1
    probe_span: int = 4
    resolution: int = 3
    e_set_constant: float = 1.0
    enforce_size_conditions: bool = False
    rotation_policy: RotationPolicy = RotationPolicy.IDENTITY
    angles: Tuple[float, ...] = ()
    # rectangles that will host a further generation need a non-empty C(R)
    require_subcubes: bool = False


@dataclass
class Selection:
    selection_ball: Ball
    base_ball: Ball
    rectangle: AnisotropicRectangle
    mass_lower: float
    mass_upper: float
    size_conditions_met: bool
    lattice: Optional[SubcubeLattice] = None


@dataclass
class SelectionResult:
    cube: DyadicCube
    cube_mass: float
    selections: List[Selection]
    retained_fraction: float
    candidates: int
    vitali_ok: bool

    @property
    def pairs(self) -> List[Tuple[Ball, AnisotropicRectangle]]:
        return [(s.selection_ball, s.rectangle) for s in self.selections]


@dataclass
class CubeRecord:
    """One expanded host cube: its place on the parent's lattice and the rectangles selected in it."""

    cube: DyadicCube
    ordinal: int
    eta_mass: float
    mu_mass: float
    retained_fraction: float
    candidates: int
    vitali_ok: bool
    children: List["CantorNode"] = field(default_factory=list)


@dataclass
class CantorNode:
    node_id: str
    parent_id: Optional[str]
    generation: int
    eta_mass: float
    rectangle: Optional[AnisotropicRectangle] = None
    host_cube: Optional[DyadicCube] = None
    selection_ball: Optional[Ball] = None
    base_ball: Optional[Ball] = None
    mu_upper: float = 0.0
    size_conditions_met: bool = True
    # C(R) for inner nodes, the root cube for the root, None for leaves
    lattice: Optional[SubcubeLattice] = None
    cubes: Dict[int, CubeRecord] = field(default_factory=dict)

    @property
    def is_leaf(self) -> bool:
        return self.lattice is None

    @property
    def cube_mass(self) -> float:
        return self.eta_mass / self.lattice.size

    @property
    def children(self) -> List["CantorNode"]:
        """Children of the expanded cubes, in lattice order."""
        return [child for ordinal in sorted(self.cubes) for child in self.cubes[ordinal].children]


@dataclass
class CantorTree:
    root: CantorNode
    depth: int
    alpha: float
    s: float
    profile: ShrinkProfile
    schedule: EpsilonSchedule
    settings: CantorSettings
    mu: MeasureSpec
    sequence: BallSequenceSpec
    seed: int
    e_set_constant: float
    rhos: Dict[int, float] = field(default_factory=dict)
    rho_fractions: Dict[int, float] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def root_record(self) -> Optional[CubeRecord]:
        return self.root.cubes.get(0)

    def nodes(self) -> Iterator[CantorNode]:
        """Materialised nodes, parents before children."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def generation(self, q: int) -> List[CantorNode]:
        return [n for n in self.nodes() if n.generation == q]

    def leaves(self) -> List[CantorNode]:
        return [n for n in self.nodes() if n.rectangle is not None and n.is_leaf]

    def records(self) -> Iterator[Tuple[CantorNode, CubeRecord]]:
        for node in self.nodes():
            for ordinal in sorted(node.cubes):
                yield node, node.cubes[ordinal]

    def host_cubes(self, q: int) -> int:
        """Size of the generation-q host-cube family, expanded or not."""
        return sum(n.lattice.size for n in self.generation(q - 1) if n.lattice is not None)

    def expand(self, node: CantorNode, ordinal: int) -> CubeRecord:
        """Select the children of one host cube of node, once."""
        record = node.cubes.get(ordinal)
        if record is not None:
            return record
        if node.lattice is None:
            raise InvalidParameterError(f"node {node.node_id} is a leaf")
        cube = node.lattice.cube(ordinal)
        q = node.generation + 1
        result = self._select(q, cube, node.cube_mass)
        record = _attach(node, ordinal, q, result, node.cube_mass, q < self.depth)
        with self._lock:
            return node.cubes.setdefault(ordinal, record)

    def _select(self, q: int, cube: DyadicCube, eta_cube: float) -> SelectionResult:
        settings = self.settings
        rho = self.rhos[q]
        constraints = SelectionConstraints(
            alpha=self.alpha,
            eta_cube=eta_cube,
            next_rho=self.rhos[q + 1],
            mass_floor=settings.mass_floor,
            probe_span=settings.probe_span,
            resolution=settings.resolution,
            e_set_constant=self.e_set_constant,
            enforce_size_conditions=settings.enforce_size_conditions,
            rotation_policy=self.sequence.rotation_policy,
            angles=self.sequence.angles,
            require_subcubes=q < self.depth,
        )
        count = settings.candidates_per_cube
        while True:
            cube_rng = _cube_rng(self.seed, q, cube)
            stream = ball_stream_for_cube(
                self.sequence, self.mu, cube, count, cube_rng, max_radius=rho * cube.side / 4.0
            )
            try:
                return select_generation(
                    cube, self.mu, stream, self.profile, self.schedule.epsilon(q), rho, constraints, cube_rng
                )
            except MassFloorError:
                if count >= settings.max_candidates:
                    raise
                count = min(2 * count, settings.max_candidates)
                logger.debug(
                    "cube %d:%s short of the floor, retrying with %d candidates", cube.level, cube.index, count
                )


def greedy_disjoint_selection(candidates: Sequence[Ball]) -> List[Ball]:
    """Disjoint sublist picked by decreasing radius (ties by input order), in input order."""
    if not candidates:
        return []
    centers = np.asarray([b.center.coords for b in candidates], dtype=float)
    radii = np.asarray([b.radius for b in candidates], dtype=float)
    order = sorted(range(len(candidates)), key=lambda i: (-radii[i], i))
    kept: List[int] = []
    for i in order:
        if kept:
            gaps = np.max(np.abs(centers[kept] - centers[i]), axis=1)
            if np.any(gaps <= radii[kept] + radii[i]):
                continue
        kept.append(i)
    return [candidates[i] for i in sorted(kept)]


def verify_vitali_selection(
    candidates: Sequence[Ball],
    selected: Sequence[Ball],
    rng: Optional[np.random.Generator] = None,
    limit: int = _EXHAUSTIVE_VITALI_LIMIT,
) -> bool:
    """Selected balls are disjoint and each candidate meets a selected ball at least as large.

    Exhaustive up to limit candidates; a random sample of limit candidates otherwise.
    """
    if not selected:
        return not candidates
    s_centers = np.asarray([b.center.coords for b in selected], dtype=float)
    s_radii = np.asarray([b.radius for b in selected], dtype=float)
    gaps = np.max(np.abs(s_centers[:, None, :] - s_centers[None, :, :]), axis=2)
    overlap = gaps <= s_radii[:, None] + s_radii[None, :]
    np.fill_diagonal(overlap, False)
    if overlap.any():
        return False
    pool = list(candidates)
    if len(pool) > limit:
        rng = rng or np.random.default_rng(0)
        pool = [pool[i] for i in rng.choice(len(pool), size=limit, replace=False)]
    for ball in pool:
        c = np.asarray(ball.center.coords)
        meets = np.max(np.abs(s_centers - c), axis=1) <= s_radii + ball.radius
        if not np.any(meets & (s_radii >= ball.radius)):
            return False
    return True


def _ball_inside_cube(ball: Ball, cube: DyadicCube) -> bool:
    lo, hi = ball.bounds()
    return bool(np.all(lo >= cube.lower()) and np.all(hi <= cube.upper()))


def _local_mass_bounds(mu: MeasureSpec, cube: DyadicCube, ball: Ball, resolution: int) -> Tuple[float, float]:
    """mu(ball) bracketed in the cube's unit frame, so deep cubes keep their dyadic resolution."""
    local = Ball(Point(tuple(to_unit_frame(cube, ball.center.coords).tolist())), ball.radius / cube.side)
    level = min(max(0, math.ceil(-math.log2(local.radius))) + resolution, MAX_DYADIC_LEVEL)
    lower, upper = ball_mass_bounds(rescale(mu, cube), local, level)
    return lower, upper


def _host_lattice(rect: AnisotropicRectangle) -> Optional[SubcubeLattice]:
    try:
        lattice = subcube_lattice(rect)
    except InvalidParameterError:
        return None
    return lattice if lattice.size else None


def select_generation(
    cube: DyadicCube,
    mu: MeasureSpec,
    balls_stream: Sequence[Ball],
    profile: ShrinkProfile | Sequence[float],
    epsilon: float,
    rho: float,
    constraints: SelectionConstraints,
    rng: Optional[np.random.Generator] = None,
) -> SelectionResult:
    """Disjoint balls L = B(x, 4r) in the cube around E_D-centres, with their rectangles."""
    profile = as_profile(profile)
    rng = rng or np.random.default_rng(0)
    side = cube.side
    mu_cube = cube_mass(mu, cube)
    alpha = constraints.alpha
    eps = min(epsilon, alpha)
    first_probe = max(0, math.ceil(-math.log2(rho)))
    params = ESetParams(
        alpha=alpha,
        epsilon=eps,
        rho=rho,
        probe_depth=first_probe + constraints.probe_span,
        resolution=constraints.resolution,
        constant=constraints.e_set_constant,
    )
    scale_term = constraints.eta_cube * (4.0 * 2.0**cube.level) ** (alpha - eps) / constraints.mass_floor
    thin_term = constraints.next_rho ** (-profile.d / profile.largest)

    bases: List[Ball] = []
    candidates: List[Ball] = []
    size_flags: List[bool] = []
    for ball in balls_stream:
        r = ball.radius
        if not (0.0 < r < 1.0) or 4.0 * r > rho * side:
            continue
        big = scale_ball(ball, 4.0)
        if not _ball_inside_cube(big, cube):
            continue
        size_ok = r**-eps >= max(scale_term, thin_term)
        if constraints.enforce_size_conditions and not size_ok:
            continue
        if not e_set_member_in_cube(mu, cube, ball.center, params):
            continue
        bases.append(ball)
        candidates.append(big)
        size_flags.append(size_ok)

    chosen = greedy_disjoint_selection(candidates)
    vitali_ok = verify_vitali_selection(candidates, chosen, rng)
    position = {id(b): i for i, b in enumerate(candidates)}
    picked = [position[id(b)] for b in chosen]
    picked_bases = [bases[i] for i in picked]
    rects = shrink_sequence(picked_bases, profile, constraints.rotation_policy, rng, constraints.angles)

    selections: List[Selection] = []
    for i, base, rect in zip(picked, picked_bases, rects):
        big = candidates[i]
        lower, upper = _local_mass_bounds(mu, cube, big, constraints.resolution)
        lower, upper = lower * mu_cube, upper * mu_cube
        allowed = mu_cube * constraints.e_set_constant * (2.0 * big.radius / side) ** (alpha - eps)
        if upper > allowed:
            continue
        lattice = None
        if constraints.require_subcubes:
            lattice = _host_lattice(rect)
            if lattice is None:
                continue
        selections.append(Selection(big, base, rect, lower, upper, size_flags[i], lattice))

    fraction = math.fsum(s.mass_lower for s in selections) / mu_cube
    if fraction < constraints.mass_floor or not selections:
        raise MassFloorError(fraction, constraints.mass_floor, where=f"cube {cube.level}:{cube.index}")
    return SelectionResult(cube, mu_cube, selections, fraction, len(candidates), vitali_ok)


def _cube_rng(seed: int, generation: int, cube: DyadicCube) -> np.random.Generator:
    return np.random.default_rng([seed, generation, cube.level, *cube.index])


def _attach(
    parent: CantorNode, ordinal: int, q: int, result: SelectionResult, eta_cube: float, inner: bool
) -> CubeRecord:
    total = math.fsum(sel.mass_upper for sel in result.selections)
    record = CubeRecord(
        cube=result.cube,
        ordinal=ordinal,
        eta_mass=eta_cube,
        mu_mass=result.cube_mass,
        retained_fraction=result.retained_fraction,
        candidates=result.candidates,
        vitali_ok=result.vitali_ok,
    )
    for k, sel in enumerate(result.selections):
        record.children.append(
            CantorNode(
                node_id=f"{parent.node_id}.{ordinal}.{k}",
                parent_id=parent.node_id,
                generation=q,
                eta_mass=eta_cube * sel.mass_upper / total,
                rectangle=sel.rectangle,
                host_cube=result.cube,
                selection_ball=sel.selection_ball,
                base_ball=sel.base_ball,
                mu_upper=sel.mass_upper,
                size_conditions_met=sel.size_conditions_met,
                lattice=sel.lattice if inner else None,
            )
        )
    return record


def build_cantor(
    mu: MeasureSpec,
    sequence: BallSequenceSpec,
    profile: ShrinkProfile | Sequence[float],
    schedule: EpsilonSchedule,
    depth: int,
    rng: np.random.Generator,
    settings: Optional[CantorSettings] = None,
) -> CantorTree:
    """Build generations 1..depth of the Cantor tree and its measure eta.

    Generations whose host-cube family fits settings.eager_cubes are expanded in full;
    deeper ones are expanded along settings.probe_paths eta-random paths here and on
    demand afterwards.
    """
    profile = as_profile(profile)
    settings = settings or CantorSettings()
    if depth < 1:
        raise InvalidParameterError(f"depth must be >= 1, got {depth}")
    if profile.d != mu.d:
        raise InvalidParameterError(f"profile dimension {profile.d} != measure dimension {mu.d}")
    alpha = dimension(mu)
    s, _ = s_value(alpha, profile)
    if s <= 0:
        raise InvalidParameterError("s(mu, tau) must be positive")
    schedule.check_against(s)
    constant = settings.e_set_constant if settings.e_set_constant is not None else float(2**mu.d)
    seed = int(rng.integers(0, 2**63 - 1))

    tree = CantorTree(
        root=CantorNode(
            node_id="0",
            parent_id=None,
            generation=0,
            eta_mass=1.0,
            lattice=SubcubeLattice(0, (0,) * mu.d, (1,) * mu.d),
        ),
        depth=depth,
        alpha=alpha,
        s=s,
        profile=profile,
        schedule=schedule,
        settings=settings,
        mu=mu,
        sequence=sequence,
        seed=seed,
        e_set_constant=constant,
    )
    rho_rng = np.random.default_rng([seed, 0])
    for q in range(1, depth + 2):
        rho, fraction = choose_rho(
            mu,
            schedule.epsilon(q),
            rho_rng,
            samples=settings.rho_samples,
            probe_span=settings.probe_span,
            min_fraction=_E_SET_ACCEPTANCE,
            constant=constant,
            resolution=settings.resolution,
        )
        tree.rhos[q] = rho
        tree.rho_fractions[q] = fraction
    logger.info("alpha=%.6f s=%.6f rho schedule %s", alpha, s, tree.rhos)

    tree.expand(tree.root, 0)
    frontier = tree.root.children
    for q in range(2, depth + 1):
        jobs = [(node, ordinal) for node in frontier for ordinal in range(node.lattice.size)]
        if len(jobs) > settings.eager_cubes:
            logger.info("generation %d: %d host cubes, expanded on demand", q, len(jobs))
            break
        with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as pool:
            records = list(
                tqdm(
                    pool.map(lambda job: tree.expand(*job), jobs),
                    total=len(jobs),
                    desc=f"generation {q}",
                    disable=not settings.progress,
                )
            )
        frontier = [child for record in records for child in record.children]
        logger.info("generation %d: %d host cubes, %d rectangles", q, len(jobs), len(frontier))

    path_rng = np.random.default_rng([seed, 1])
    for _ in range(settings.probe_paths):
        sample_eta_point(tree, path_rng)
    return tree


def sample_eta_point(tree: CantorTree, rng: np.random.Generator) -> Point:
    """A point drawn from eta_P: child by mass, host cube uniformly, uniform inside the leaf."""
    node = tree.root
    while not node.is_leaf:
        record = tree.expand(node, int(rng.integers(node.lattice.size)))
        masses = np.asarray([child.eta_mass for child in record.children])
        node = record.children[int(rng.choice(len(masses), p=masses / masses.sum()))]
    rect = node.rectangle
    u = rng.random(rect.d) * np.asarray(rect.sides)
    return Point(tuple((rect.anchor.as_array() + rect.rotation.as_array() @ u).tolist()))


def _mass_bracket(
    tree: CantorTree, lo: np.ndarray, hi: np.ndarray, expansions: Optional[int]
) -> Tuple[float, float]:
    lower: List[float] = []
    upper: List[float] = []
    budget = math.inf if expansions is None else expansions
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.rectangle is not None:
            if not rectangle_intersects_box(node.rectangle, lo, hi):
                continue
            if rectangle_inside_box(node.rectangle, lo, hi):
                lower.append(node.eta_mass)
                upper.append(node.eta_mass)
                continue
            if node.is_leaf:
                share = node.eta_mass * rectangle_box_fraction(node.rectangle, lo, hi)
                lower.append(share)
                upper.append(share)
                continue
        lattice, m = node.lattice, node.cube_mass
        inside = lattice.count_inside(lo, hi)
        lower.append(inside * m)
        upper.append(inside * m)
        try:
            partial = lattice.partial_ordinals(lo, hi, _PARTIAL_LIMIT)
        except CellBudgetExceeded as exc:
            if expansions is None:
                raise
            upper.append(exc.requested * m)
            continue
        fresh = [i for i in partial if i not in node.cubes]
        if len(fresh) > budget:
            upper.append(len(fresh) * m)
            partial = [i for i in partial if i in node.cubes]
        else:
            budget -= len(fresh)
        for ordinal in partial:
            stack.extend(tree.expand(node, ordinal).children)
    return math.fsum(lower), math.fsum(upper)


def eta_mass_bounds(tree: CantorTree, ball: Ball, expansions: Optional[int] = None) -> Tuple[float, float]:
    """(lower, upper) bracket of eta_P(ball), equal when every cut host cube could be resolved.

    At most expansions new host cubes are selected; the others count as empty below
    and as full above.
    """
    lo, hi = ball.bounds()
    budget = tree.settings.max_expansions if expansions is None else expansions
    return _mass_bracket(tree, lo, hi, budget)


def eta_mass_of_ball(tree: CantorTree, ball: Ball) -> float:
    """Exact eta_P(ball), expanding every host cube the ball cuts.

    Raises CellBudgetExceeded when one lattice has too many cut cubes to enumerate.
    """
    lo, hi = ball.bounds()
    lower, _ = _mass_bracket(tree, lo, hi, None)
    return lower


def deepest_unique_generation(tree: CantorTree, ball: Ball, expansions: Optional[int] = None) -> int:
    """The last generation q at which the ball meets exactly one rectangle (0 when it meets several).

    Stops early, as if several were met, when a lattice has more than expansions cut cubes.
    """
    lo, hi = ball.bounds()
    budget = tree.settings.max_expansions if expansions is None else expansions
    node, deepest = tree.root, 0
    while not node.is_leaf:
        lattice = node.lattice
        if lattice.count_inside(lo, hi) >= 2:
            break
        meeting = lattice.window(lo, hi)
        total = math.prod(max(last - first + 1, 0) for first, last in meeting)
        if total > budget:
            break
        met = []
        for js in itertools.product(*(range(first, last + 1) for first, last in meeting)):
            record = tree.expand(node, lattice.ordinal_of(js))
            met.extend(c for c in record.children if rectangle_intersects_box(c.rectangle, lo, hi))
        if len(met) != 1:
            break
        node, deepest = met[0], met[0].generation
    return deepest


@dataclass
class AuditReport:
    conservation_error: float = 0.0
    separation_ok: bool = True
    nesting_ok: bool = True
    size_ordering_ok: bool = True
    mass_chain_ok: bool = True
    vitali_ok: bool = True
    e_set_ok: bool = True
    first_generation_ok: bool = True
    rectangle_bound_ok: bool = True
    cube_bound_ok: bool = True
    strict_bounds: bool = False
    rectangle_mass_constant: float = 0.0
    rectangle_mass_fraction: float = 0.0
    host_cube_mass_constant: float = 0.0
    kappa: Tuple[float, float] = (1.0, 1.0)
    size_conditions_fraction: float = 0.0
    nodes: int = 0
    cubes: int = 0

    @property
    def passed(self) -> bool:
        structural = (
            self.conservation_error <= CONSERVATION_TOLERANCE
            and self.separation_ok
            and self.nesting_ok
            and self.size_ordering_ok
            and self.mass_chain_ok
            and self.vitali_ok
            and self.e_set_ok
            and self.first_generation_ok
        )
        if self.strict_bounds:
            return structural and self.rectangle_bound_ok and self.cube_bound_ok
        return structural

    def as_dict(self) -> dict:
        return {
            "conservation_error": self.conservation_error,
            "separation_ok": self.separation_ok,
            "nesting_ok": self.nesting_ok,
            "size_ordering_ok": self.size_ordering_ok,
            "mass_chain_ok": self.mass_chain_ok,
            "vitali_ok": self.vitali_ok,
            "e_set_ok": self.e_set_ok,
            "first_generation_ok": self.first_generation_ok,
            "rectangle_bound_ok": self.rectangle_bound_ok,
            "cube_bound_ok": self.cube_bound_ok,
            "strict_bounds": self.strict_bounds,
            "rectangle_mass_constant": self.rectangle_mass_constant,
            "rectangle_mass_fraction": self.rectangle_mass_fraction,
            "host_cube_mass_constant": self.host_cube_mass_constant,
            "kappa": list(self.kappa),
            "size_conditions_fraction": self.size_conditions_fraction,
            "nodes": self.nodes,
            "cubes": self.cubes,
            "passed": self.passed,
        }


def _cube_inside_rectangle(cube: DyadicCube, rect: AnisotropicRectangle) -> bool:
    corners = np.array(list(itertools.product(*zip(cube.lower(), cube.upper()))))
    local = (corners - rect.anchor.as_array()) @ rect.rotation.as_array()
    sides = np.asarray(rect.sides)
    tol = _AUDIT_SLACK * sides.max()
    return bool(np.all(local >= -tol) and np.all(local <= sides + tol))


def _rectangle_inside_cube(rect: AnisotropicRectangle, cube: DyadicCube) -> bool:
    vertices = rectangle_vertices(rect)
    return bool(np.all(vertices >= cube.lower()) and np.all(vertices <= cube.upper()))


def _tripled_balls_disjoint(children: Sequence[CantorNode]) -> bool:
    if len(children) < 2:
        return True
    centers = np.asarray([c.base_ball.center.coords for c in children])
    radii = np.asarray([c.base_ball.radius for c in children])
    gaps = np.max(np.abs(centers[:, None, :] - centers[None, :, :]), axis=2)
    apart = gaps > 3.0 * (radii[:, None] + radii[None, :])
    np.fill_diagonal(apart, True)
    return bool(apart.all())


def audit_tree(tree: CantorTree) -> AuditReport:
    """Check conservation, separation, nesting and the eta bounds over the materialised tree."""
    settings = tree.settings
    report = AuditReport(strict_bounds=settings.strict_bounds)
    alpha, tau = tree.alpha, tree.profile.exponents
    gap_sum = math.fsum(tau[-1] - t for t in tau)
    eps_of = tree.schedule.epsilon
    constant = tree.e_set_constant
    report.e_set_ok = all(f >= _E_SET_ACCEPTANCE for f in tree.rho_fractions.values())

    errors = [0.0]
    rectangle_ratios: List[float] = []
    size_flags: List[bool] = []
    kappa_ratios: List[float] = []
    for node in tree.nodes():
        report.nodes += 1
        if node.lattice is not None:
            errors.append(abs(node.cube_mass * node.lattice.size - node.eta_mass))
            if node.rectangle is not None:
                rect = node.rectangle
                if _host_lattice(rect) != node.lattice:
                    report.nesting_ok = False
                kappa_ratios.append(node.lattice.size / math.prod(x / rect.smallest_side for x in rect.sides))
        for record in node.cubes.values():
            report.cubes += 1
            errors.append(abs(math.fsum(c.eta_mass for c in record.children) - record.eta_mass))
            report.vitali_ok &= record.vitali_ok
            if not _tripled_balls_disjoint(record.children):
                report.separation_ok = False
            if node.lattice.cube(record.ordinal) != record.cube:
                report.nesting_ok = False
            if node.rectangle is not None and not _cube_inside_rectangle(record.cube, node.rectangle):
                report.nesting_ok = False
        if node.rectangle is None:
            continue

        q = node.generation
        eps = eps_of(q)
        r = node.rectangle.base_radius
        cube = node.host_cube
        parent_record = _record_of(tree, node)
        if not _rectangle_inside_cube(node.rectangle, cube):
            report.nesting_ok = False
        if 4.0 * r > tree.rhos[q] * cube.side * (1.0 + _AUDIT_SLACK):
            report.size_ordering_ok = False
        e_exponent = alpha - min(eps, alpha)
        allowed = parent_record.mu_mass * constant * (8.0 * r / cube.side) ** e_exponent
        if node.mu_upper > allowed * (1.0 + _AUDIT_SLACK):
            report.e_set_ok = False
        chain = parent_record.eta_mass / (parent_record.retained_fraction * parent_record.mu_mass) * allowed
        if node.eta_mass > chain * (1.0 + _AUDIT_SLACK):
            report.mass_chain_ok = False
            if q == 1:
                report.first_generation_ok = False
        rectangle_ratios.append(node.eta_mass / r ** (alpha - 2.0 * eps))
        size_flags.append(node.size_conditions_met)

    report.conservation_error = max(errors)
    if kappa_ratios:
        report.kappa = (min(kappa_ratios), max(kappa_ratios))
    kappa_d = max(1.0, 1.0 / report.kappa[0], report.kappa[1])
    host_ratios = []
    for node, record in tree.records():
        if node.rectangle is None:
            continue
        r = node.rectangle.base_radius
        host_ratios.append(record.eta_mass / r ** (alpha - 2.0 * eps_of(node.generation) + gap_sum))
    if rectangle_ratios:
        report.rectangle_mass_constant = max(rectangle_ratios)
        report.rectangle_mass_fraction = sum(x <= 1.0 for x in rectangle_ratios) / len(rectangle_ratios)
        report.rectangle_bound_ok = report.rectangle_mass_constant <= 1.0 + _AUDIT_SLACK
        report.size_conditions_fraction = sum(size_flags) / len(size_flags)
    if host_ratios:
        report.host_cube_mass_constant = max(host_ratios)
        report.cube_bound_ok = report.host_cube_mass_constant <= kappa_d * (1.0 + _AUDIT_SLACK)
    return report


def _record_of(tree: CantorTree, node: CantorNode) -> CubeRecord:
    parent = tree.root
    # ids are "<parent id>.<ordinal>.<k>"
    path = node.node_id.split(".")[1:]
    for step in range(0, len(path) - 2, 2):
        parent = parent.cubes[int(path[step])].children[int(path[step + 1])]
    return parent.cubes[int(path[-2])]


@dataclass
class CertificateReport:
    s: float
    claimed_lower_bound: float
    slack: float
    rows: List[dict]
    audit: AuditReport
    samples: int
    normalizer: float = 1.0

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(row["passed"] for row in self.rows) and self.audit.passed

    def as_dict(self) -> dict:
        return {
            "s": self.s,
            "claimed_lower_bound": self.claimed_lower_bound,
            "slack": self.slack,
            "samples": self.samples,
            "normalizer": self.normalizer,
            "passed": self.passed,
            "octaves": self.rows,
            "audit": self.audit.as_dict(),
        }


def certify_holder(
    tree: CantorTree,
    s: float,
    schedule: EpsilonSchedule,
    samples: int,
    rng: np.random.Generator,
    slack: float = 0.1,
) -> CertificateReport:
    """Sample cubes C of side r around eta-points and compare log eta(C) / log r with s - 4 eps_p(r).

    p(r) is the smallest, over the octave's samples, of the last generation at which C
    meets a single rectangle. When eta(C) is only bracketed the upper end is used, so
    exponents are never overstated. ``normalizer`` (the largest eta(R) / r^(alpha - 2 eps_1)
    over the first generation) and the exponents after dividing by it are reported only.
    """
    if not tree.root.cubes:
        raise InvalidParameterError("the tree has no rectangles to certify")
    first = [n for n in tree.generation(1) if n.eta_mass > 0]
    eps1 = schedule.epsilon(1)
    normalizer = max(
        (n.eta_mass / n.rectangle.base_radius ** (tree.alpha - 2.0 * eps1) for n in first),
        default=1.0,
    )
    normalizer = max(normalizer, 1.0)
    if not tree.leaves():
        sample_eta_point(tree, rng)
    finest = min(leaf.rectangle.smallest_side for leaf in tree.leaves())
    # two octaves below the finest leaf sample the uniform spreading inside leaves
    top_octave = min(MAX_DYADIC_LEVEL, max(1, math.ceil(-math.log2(finest))) + 2)

    per_octave: Dict[int, List[Tuple[float, float, float, int]]] = {}
    for _ in tqdm(range(samples), desc="certificate", disable=not tree.settings.progress):
        center = sample_eta_point(tree, rng)
        octave = int(rng.integers(1, top_octave + 1))
        side = math.ldexp(1.0 + float(rng.random()), -octave)
        ball = Ball(center, side / 2.0)
        lower, upper = eta_mass_bounds(tree, ball)
        unique = deepest_unique_generation(tree, ball)
        if upper > 0:
            per_octave.setdefault(octave, []).append((side, lower, upper, unique))

    rows = []
    for octave in sorted(per_octave):
        draws = per_octave[octave]
        exponents = [math.log(min(upper, 1.0)) / math.log(side) for side, _, upper, _ in draws]
        normalized = [math.log(min(upper, 1.0) / normalizer) / math.log(side) for side, _, upper, _ in draws]
        p = min(unique for *_, unique in draws)
        eps = schedule.epsilon(p)
        required = s - 4.0 * eps - slack
        rows.append(
            {
                "octave": octave,
                "side_min": math.ldexp(1.0, -octave),
                "side_max": math.ldexp(1.0, -octave + 1),
                "samples": len(draws),
                "bracketed": sum(lower < upper for _, lower, upper, _ in draws),
                "p": p,
                "epsilon": eps,
                "min_exponent": min(exponents),
                "min_exponent_normalized": min(normalized),
                "required": required,
                "implied_constant": max(upper / side ** (s - 4.0 * eps) for side, _, upper, _ in draws),
                "passed": min(exponents) >= required,
            }
        )
    return CertificateReport(
        s=s,
        claimed_lower_bound=s - 4.0 * schedule.epsilon(tree.depth),
        slack=slack,
        rows=rows,
        audit=audit_tree(tree),
        samples=samples,
        normalizer=normalizer,
    )
