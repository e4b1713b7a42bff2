from __future__ import annotations

import math

import numpy as np
import pytest

from models.errors import InvalidParameterError, MassFloorError
from tools.cantor import (
    CantorNode,
    CantorSettings,
    CantorTree,
    CubeRecord,
    EpsilonSchedule,
    SelectionConstraints,
    audit_tree,
    build_cantor,
    certify_holder,
    deepest_unique_generation,
    eta_mass_bounds,
    eta_mass_of_ball,
    greedy_disjoint_selection,
    sample_eta_point,
    select_generation,
    verify_vitali_selection,
)
from tools.formula import ShrinkProfile
from tools.geometry import AnisotropicRectangle, Ball, DyadicCube, Point, Rotation, SubcubeLattice
from tools.measure import MeasureSpec
from tools.sequence import BallSequenceSpec

PROFILE = (1.5,)
SMALL = CantorSettings(candidates_per_cube=64, mass_floor=0.05, rho_samples=128)
LAZY = CantorSettings(candidates_per_cube=64, mass_floor=0.05, rho_samples=128, eager_cubes=0, probe_paths=0)


def _line_tree(depth=2, seed=5, settings=SMALL):
    return build_cantor(
        MeasureSpec.lebesgue(1),
        BallSequenceSpec(),
        PROFILE,
        EpsilonSchedule(0.1),
        depth=depth,
        rng=np.random.default_rng(seed),
        settings=settings,
    )


@pytest.fixture(scope="module")
def line_tree():
    return _line_tree()


def _ball(x, r):
    return Ball(Point(tuple(x)), r)


def _leaf_interval(leaf):
    a = leaf.rectangle.anchor.coords[0]
    return a, a + leaf.rectangle.sides[0]


def _direct_line_mass(leaves, lo, hi):
    total = 0.0
    for leaf in leaves:
        a, b = _leaf_interval(leaf)
        total += leaf.eta_mass * max(0.0, min(b, hi) - max(a, lo)) / (b - a)
    return total


def test_epsilon_schedule():
    schedule = EpsilonSchedule(0.2)
    assert schedule.epsilon(0) == 0.2
    assert schedule.epsilon(3) == pytest.approx(0.025)
    schedule.check_against(1.0)
    with pytest.raises(InvalidParameterError):
        schedule.check_against(0.5)
    for bad in (0.0, 1.5):
        with pytest.raises(InvalidParameterError):
            EpsilonSchedule(bad)


def test_settings_validation():
    with pytest.raises(InvalidParameterError):
        CantorSettings(mass_floor=0.0)
    with pytest.raises(InvalidParameterError):
        CantorSettings(candidates_per_cube=0)
    with pytest.raises(InvalidParameterError):
        CantorSettings(candidates_per_cube=512, max_candidates=256)
    with pytest.raises(InvalidParameterError):
        CantorSettings(max_expansions=-1)


def test_greedy_keeps_disjoint_input():
    balls = [_ball((0.1, 0.1), 0.05), _ball((0.5, 0.5), 0.1), _ball((0.9, 0.2), 0.02)]
    assert greedy_disjoint_selection(balls) == balls
    assert greedy_disjoint_selection([]) == []


def test_greedy_collapses_copies():
    ball = _ball((0.4,), 0.1)
    chosen = greedy_disjoint_selection([ball, _ball((0.4,), 0.1), _ball((0.4,), 0.1)])
    assert len(chosen) == 1 and chosen[0] is ball


def test_greedy_prefers_larger_radius():
    small, large = _ball((0.3,), 0.05), _ball((0.35,), 0.2)
    assert greedy_disjoint_selection([small, large]) == [large]


def test_vitali_property_on_random_balls(rng):
    balls = [
        _ball(tuple(rng.random(2)), float(rng.uniform(0.001, 0.05))) for _ in range(1000)
    ]
    chosen = greedy_disjoint_selection(balls)
    assert verify_vitali_selection(balls, chosen, rng)
    # dropping a selected ball leaves some candidate uncovered
    assert not verify_vitali_selection(balls, chosen[1:], rng)


def test_vitali_rejects_overlapping_selection():
    a, b = _ball((0.5,), 0.1), _ball((0.55,), 0.1)
    assert not verify_vitali_selection([a, b], [a, b])
    assert verify_vitali_selection([], [])


def _constraints(**overrides):
    values = dict(alpha=1.0, eta_cube=1.0, next_rho=1 / 16, mass_floor=0.1, e_set_constant=2.0)
    values.update(overrides)
    return SelectionConstraints(**values)


def test_select_generation_singleton():
    leb = MeasureSpec.lebesgue(1)
    result = select_generation(
        DyadicCube.root(1), leb, [_ball((0.5,), 1 / 32)], PROFILE, 0.05, 0.25, _constraints()
    )
    assert len(result.selections) == 1
    chosen = result.selections[0]
    assert chosen.selection_ball == _ball((0.5,), 1 / 8)
    assert chosen.rectangle.sides[0] == pytest.approx(2.0**-7.5)
    assert (chosen.mass_lower, chosen.mass_upper) == pytest.approx((0.25, 0.25))
    assert chosen.lattice is None
    assert result.retained_fraction == pytest.approx(0.25)
    assert result.vitali_ok


def test_select_generation_attaches_subcube_lattice():
    leb = MeasureSpec.lebesgue(1)
    result = select_generation(
        DyadicCube.root(1),
        leb,
        [_ball((0.5,), 1 / 32)],
        PROFILE,
        0.05,
        0.25,
        _constraints(require_subcubes=True),
    )
    lattice = result.selections[0].lattice
    assert lattice is not None and lattice.size >= 1
    for ordinal in range(lattice.size):
        cube = lattice.cube(ordinal)
        assert cube.lower()[0] >= 0.5 and cube.upper()[0] <= 0.5 + 2.0**-7.5


def test_select_generation_rejects_rectangles_without_subcubes():
    leb = MeasureSpec.lebesgue(1)
    # r^12 = 2^-60: the admissible level would exceed the deepest dyadic level
    stream = [_ball((0.5,), 1 / 32)]
    kept = select_generation(DyadicCube.root(1), leb, stream, (12.0,), 0.05, 0.25, _constraints())
    assert len(kept.selections) == 1
    with pytest.raises(MassFloorError):
        select_generation(
            DyadicCube.root(1), leb, stream, (12.0,), 0.05, 0.25, _constraints(require_subcubes=True)
        )


def test_select_generation_rejects_oversized_radii():
    leb = MeasureSpec.lebesgue(1)
    stream = [_ball((0.5,), 0.3), _ball((0.4,), 0.2)]
    with pytest.raises(MassFloorError) as info:
        select_generation(DyadicCube.root(1), leb, stream, PROFILE, 0.05, 0.5, _constraints())
    assert info.value.achieved == 0.0


def test_select_generation_measures_deep_cubes_locally():
    leb = MeasureSpec.lebesgue(1)
    cube = DyadicCube(40, (3 << 20,))
    center = cube.lower()[0] + cube.side / 2.0
    result = select_generation(
        cube, leb, [_ball((center,), cube.side / 32)], PROFILE, 0.05, 0.25, _constraints()
    )
    chosen = result.selections[0]
    assert chosen.mass_lower == pytest.approx(0.25 * cube.side, rel=1e-12)
    assert chosen.mass_upper == pytest.approx(0.25 * cube.side, rel=1e-12)


def test_build_validates_inputs():
    leb = MeasureSpec.lebesgue(1)
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidParameterError):
        build_cantor(leb, BallSequenceSpec(), PROFILE, EpsilonSchedule(0.1), 0, rng, SMALL)
    with pytest.raises(InvalidParameterError):
        build_cantor(leb, BallSequenceSpec(), (1.0, 2.0), EpsilonSchedule(0.1), 1, rng, SMALL)
    # s = 2/3, so eps0 must stay below 1/6
    with pytest.raises(InvalidParameterError):
        build_cantor(leb, BallSequenceSpec(), PROFILE, EpsilonSchedule(0.2), 1, rng, SMALL)


def test_build_stops_when_the_e_set_is_too_thin():
    mu = MeasureSpec.bernoulli([0.4, 0.1, 0.1, 0.4])
    with pytest.raises(MassFloorError):
        build_cantor(
            mu,
            BallSequenceSpec(),
            (1.0, 2.0),
            EpsilonSchedule(0.2),
            3,
            np.random.default_rng(0),
            CantorSettings(candidates_per_cube=64),
        )


def test_tree_shape(line_tree):
    assert line_tree.s == pytest.approx(2 / 3)
    assert set(line_tree.rhos) == {1, 2, 3}
    assert line_tree.root.node_id == "0"
    first, second = line_tree.generation(1), line_tree.generation(2)
    assert first and second
    for node in first:
        assert node.node_id.startswith("0.0.")
        assert node.lattice is not None and len(node.cubes) == node.lattice.size
    assert all(node.is_leaf for node in second)
    assert {leaf.node_id for leaf in line_tree.leaves()} == {n.node_id for n in second}
    assert line_tree.host_cubes(2) == sum(n.lattice.size for n in first)


def test_tree_conserves_mass(line_tree):
    assert math.fsum(n.eta_mass for n in line_tree.generation(1)) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(leaf.eta_mass for leaf in line_tree.leaves()) == pytest.approx(1.0, abs=1e-12)
    for node in line_tree.generation(1):
        assert math.fsum(c.eta_mass for c in node.children) == pytest.approx(node.eta_mass, rel=1e-12)
        for record in node.cubes.values():
            assert record.eta_mass == pytest.approx(node.eta_mass / node.lattice.size, rel=1e-15)


def test_tree_audit_passes(line_tree):
    report = audit_tree(line_tree)
    assert report.passed, report.as_dict()
    assert report.conservation_error <= 1e-12
    assert report.e_set_ok and report.first_generation_ok
    assert report.rectangle_mass_constant > 0.0
    assert report.nodes == sum(1 for _ in line_tree.nodes())


def test_lazy_expansion_matches_eager_build(line_tree):
    lazy = _line_tree(settings=LAZY)
    assert lazy.rhos == line_tree.rhos
    assert not lazy.generation(2)
    for node in lazy.generation(1):
        for ordinal in reversed(range(node.lattice.size)):
            lazy.expand(node, ordinal)
    eager = {leaf.node_id: leaf for leaf in line_tree.leaves()}
    grown = {leaf.node_id: leaf for leaf in lazy.leaves()}
    assert grown.keys() == eager.keys()
    for key, leaf in grown.items():
        assert leaf.rectangle == eager[key].rectangle
        assert leaf.eta_mass == eager[key].eta_mass


def test_eta_mass_of_whole_and_empty_balls(line_tree):
    assert eta_mass_of_ball(line_tree, _ball((0.5,), 1.0)) == pytest.approx(1.0, abs=1e-12)
    # rectangles start at least 4r from the cube boundary
    assert eta_mass_of_ball(line_tree, _ball((0.0,), 1e-6)) == 0.0


def test_eta_mass_is_the_leaf_volume_fraction(line_tree):
    rng = np.random.default_rng(17)
    leaves = line_tree.leaves()
    for _ in range(200):
        x, r = float(rng.random()), float(10.0 ** rng.uniform(-7, -1))
        expected = _direct_line_mass(leaves, x - r, x + r)
        assert eta_mass_of_ball(line_tree, _ball((x,), r)) == pytest.approx(expected, abs=1e-12)


def test_eta_mass_agrees_with_sampled_points(line_tree):
    rng = np.random.default_rng(23)
    points = np.array([sample_eta_point(line_tree, rng).coords[0] for _ in range(10_000)])
    leaf = max(line_tree.leaves(), key=lambda n: n.eta_mass)
    a, b = _leaf_interval(leaf)
    # a ball cutting the heaviest leaf in half, one inside it and one across a gap
    balls = [_ball((a,), (b - a) / 2), _ball(((a + b) / 2,), (b - a) / 8), _ball((b,), 0.02)]
    for ball in balls:
        lo, hi = ball.bounds()
        share = float(np.mean((points >= lo[0]) & (points <= hi[0])))
        assert share == pytest.approx(eta_mass_of_ball(line_tree, ball), abs=0.025)


def test_eta_samples_land_in_leaves(line_tree):
    rng = np.random.default_rng(3)
    leaves = line_tree.leaves()
    for _ in range(20):
        x = sample_eta_point(line_tree, rng).coords[0]
        assert any(a <= x <= b for a, b in map(_leaf_interval, leaves))


def test_bounds_bracket_unexpanded_cubes():
    tree = _line_tree(settings=LAZY)
    rng = np.random.default_rng(29)
    for _ in range(30):
        ball = _ball((float(rng.random()),), float(rng.uniform(1e-3, 0.1)))
        lower, upper = eta_mass_bounds(tree, ball, expansions=0)
        assert lower <= upper
        exact = eta_mass_of_ball(tree, ball)
        assert lower - 1e-12 <= exact <= upper + 1e-12
        # every cut cube is cached now
        assert eta_mass_bounds(tree, ball, expansions=0) == pytest.approx((exact, exact), abs=1e-12)


def test_deepest_unique_generation(line_tree):
    assert len(line_tree.generation(1)) > 1
    assert deepest_unique_generation(line_tree, _ball((0.5,), 1.0)) == 0
    rng = np.random.default_rng(31)
    point = sample_eta_point(line_tree, rng)
    assert deepest_unique_generation(line_tree, Ball(point, 1e-12)) == 2


def test_build_is_deterministic():
    a, b = _line_tree(depth=1, seed=42), _line_tree(depth=1, seed=42)
    assert [n.eta_mass for n in a.leaves()] == [n.eta_mass for n in b.leaves()]
    assert [n.rectangle for n in a.leaves()] == [n.rectangle for n in b.leaves()]


def _fresh_depth_one():
    return _line_tree(depth=1, seed=13)


def test_audit_flags_e_set_violations():
    tree = _fresh_depth_one()
    assert audit_tree(tree).passed
    tree.generation(1)[0].mu_upper *= 1e6
    report = audit_tree(tree)
    assert not report.e_set_ok and not report.passed


def test_audit_flags_low_rho_acceptance():
    tree = _fresh_depth_one()
    tree.rho_fractions[1] = 0.25
    assert not audit_tree(tree).e_set_ok


def test_audit_flags_first_generation_mass():
    tree = _fresh_depth_one()
    record = tree.root_record
    record.retained_fraction *= 1e6
    report = audit_tree(tree)
    assert not report.first_generation_ok and not report.mass_chain_ok


def test_audit_flags_failed_vitali_and_conservation():
    tree = _fresh_depth_one()
    tree.root_record.vitali_ok = False
    tree.generation(1)[0].eta_mass += 1e-6
    report = audit_tree(tree)
    assert not report.vitali_ok
    assert report.conservation_error > 1e-7
    assert not report.passed


def test_strict_bounds_gate_the_audit():
    tree = _fresh_depth_one()
    report = audit_tree(tree)
    tree.settings = CantorSettings(candidates_per_cube=64, mass_floor=0.05, strict_bounds=True)
    strict = audit_tree(tree)
    assert strict.strict_bounds
    assert strict.passed == (report.passed and strict.rectangle_bound_ok and strict.cube_bound_ok)


def test_certificate_report(line_tree):
    schedule = EpsilonSchedule(0.1)
    report = certify_holder(line_tree, line_tree.s, schedule, 300, np.random.default_rng(8))
    assert report.claimed_lower_bound == pytest.approx(2 / 3 - 4 * 0.025)
    assert report.normalizer >= 1.0
    assert report.rows
    octaves = [row["octave"] for row in report.rows]
    assert octaves == sorted(octaves)
    assert sum(row["samples"] for row in report.rows) <= 300
    for row in report.rows:
        assert row["side_min"] * 2 == row["side_max"]
        assert 0 <= row["p"] <= line_tree.depth
        assert row["epsilon"] == schedule.epsilon(row["p"])
        assert row["required"] == pytest.approx(line_tree.s - 4 * row["epsilon"] - 0.1)
        assert row["passed"] == (row["min_exponent"] >= row["required"])
        assert row["min_exponent_normalized"] >= row["min_exponent"]
    summary = report.as_dict()
    assert summary["passed"] == report.passed
    assert summary["audit"]["passed"]


def _single_leaf_tree():
    """Depth one, one leaf filling the unit interval up to 1e-6: eta is Lebesgue there."""
    cube = DyadicCube.root(1)
    leaf = CantorNode(
        node_id="0.0.0",
        parent_id="0",
        generation=1,
        eta_mass=1.0,
        rectangle=AnisotropicRectangle(Point((0.0,)), 1.0 - 1e-6, ShrinkProfile((1.0,)), Rotation.identity(1)),
        host_cube=cube,
        selection_ball=_ball((0.5,), 0.5),
        base_ball=_ball((0.5,), 0.125),
        mu_upper=1.0,
    )
    record = CubeRecord(
        cube=cube, ordinal=0, eta_mass=1.0, mu_mass=1.0, retained_fraction=1.0, candidates=1, vitali_ok=True,
        children=[leaf],
    )
    root = CantorNode(
        node_id="0", parent_id=None, generation=0, eta_mass=1.0, lattice=SubcubeLattice(0, (0,), (1,)),
        cubes={0: record},
    )
    return CantorTree(
        root=root,
        depth=1,
        alpha=1.0,
        s=1.0,
        profile=ShrinkProfile((1.0,)),
        schedule=EpsilonSchedule(0.25),
        settings=CantorSettings(),
        mu=MeasureSpec.lebesgue(1),
        sequence=BallSequenceSpec(),
        seed=0,
        e_set_constant=2.0,
        rhos={1: 4.0, 2: 4.0},
        rho_fractions={1: 1.0, 2: 1.0},
    )


def test_certificate_passes_on_a_uniform_leaf():
    tree = _single_leaf_tree()
    report = certify_holder(tree, 1.0, tree.schedule, 2000, np.random.default_rng(2))
    assert report.audit.passed, report.audit.as_dict()
    assert [row["octave"] for row in report.rows] == [1, 2, 3]
    assert all(row["p"] == 1 for row in report.rows)
    assert all(row["bracketed"] == 0 for row in report.rows)
    assert report.passed, report.rows


@pytest.mark.slow
def test_lebesgue_plane_depth_three_run():
    tree = build_cantor(
        MeasureSpec.lebesgue(2),
        BallSequenceSpec(),
        (1.0, 2.0),
        EpsilonSchedule(0.2),
        3,
        np.random.default_rng(6),
        CantorSettings(candidates_per_cube=64),
    )
    # the third generation is expanded along eta-paths and ball queries only
    assert tree.generation(3)
    assert tree.host_cubes(3) > len([r for n in tree.generation(2) for r in n.cubes.values()])
    report = certify_holder(tree, tree.s, tree.schedule, 500, np.random.default_rng(7))
    assert report.audit.passed, report.audit.as_dict()
    assert report.rows
    for row in report.rows:
        assert math.isfinite(row["min_exponent"]) and row["samples"] > 0
