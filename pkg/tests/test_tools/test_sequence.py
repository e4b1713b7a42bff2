from __future__ import annotations

import numpy as np
import pytest

from models.errors import InvalidParameterError
from tools.geometry import Ball, DyadicCube, Point
from tools.measure import MeasureSpec
from tools.sequence import (
    BallSequenceSpec,
    RotationPolicy,
    SequenceKind,
    ball_stream_for_cube,
    coverage_diagnostics,
    generate_balls,
    jarnik_fractions,
    shrink_sequence,
)


@pytest.fixture
def lebesgue1() -> MeasureSpec:
    return MeasureSpec.lebesgue(1)


def test_jarnik_fractions_order():
    assert jarnik_fractions(5) == [(0, 1), (1, 1), (1, 2), (1, 3), (2, 3)]
    assert jarnik_fractions(3, min_denominator=4) == [(1, 4), (3, 4), (1, 5)]


def test_jarnik_balls_up_to_denominator_three(lebesgue1, rng):
    spec = BallSequenceSpec(kind=SequenceKind.JARNIK)
    balls = generate_balls(spec, lebesgue1, 5, rng)
    assert [b.center.coords[0] for b in balls] == pytest.approx([0.0, 1.0, 0.5, 1 / 3, 2 / 3])
    assert [b.radius for b in balls] == pytest.approx([1.0, 1.0, 0.25, 1 / 9, 1 / 9])


def test_jarnik_needs_dimension_one(lebesgue2, rng):
    with pytest.raises(InvalidParameterError):
        generate_balls(BallSequenceSpec(kind=SequenceKind.JARNIK), lebesgue2, 3, rng)


def test_explicit_balls_pass_through(lebesgue2, rng):
    spec = BallSequenceSpec(
        kind=SequenceKind.EXPLICIT,
        centers=((0.2, 0.3), (0.7, 0.1)),
        radii=(0.1, 0.05),
    )
    balls = generate_balls(spec, lebesgue2, 2, rng)
    assert balls == [Ball(Point((0.2, 0.3)), 0.1), Ball(Point((0.7, 0.1)), 0.05)]


def test_explicit_spec_validation():
    with pytest.raises(ValueError):
        BallSequenceSpec(kind=SequenceKind.EXPLICIT, centers=((0.2,),), radii=())
    with pytest.raises(ValueError):
        BallSequenceSpec(kind=SequenceKind.EXPLICIT, centers=((1.2,),), radii=(0.1,))
    with pytest.raises(ValueError):
        BallSequenceSpec(rotation_policy=RotationPolicy.FIXED_ANGLES)


def test_iid_radii_and_determinism(bernoulli_quarter):
    spec = BallSequenceSpec(radius_scale=0.5, gamma=2.0)
    a = generate_balls(spec, bernoulli_quarter, 50, np.random.default_rng(9))
    b = generate_balls(spec, bernoulli_quarter, 50, np.random.default_rng(9))
    assert a == b
    assert [x.radius for x in a[:4]] == pytest.approx([0.5, 0.5 / 2**0.5, 0.5 / 3**0.5, 0.25])
    assert generate_balls(spec, bernoulli_quarter, 3, np.random.default_rng(9), offset=3)[0].radius == 0.25


def test_shrink_jarnik_lengths(lebesgue1, rng):
    spec = BallSequenceSpec(kind=SequenceKind.JARNIK, min_denominator=2)
    balls = generate_balls(spec, lebesgue1, 6, rng)
    for (p, q), rect in zip(jarnik_fractions(6, 2), shrink_sequence(balls, (2.0,))):
        assert rect.sides[0] == pytest.approx(float(q) ** -4)
        assert rect.anchor.coords[0] == pytest.approx(p / q)


def test_shrink_rejects_unit_radius(lebesgue1, rng):
    balls = generate_balls(BallSequenceSpec(kind=SequenceKind.JARNIK), lebesgue1, 2, rng)
    with pytest.raises(InvalidParameterError):
        shrink_sequence(balls, (1.0,))


def test_random_orthogonal_rotations(rng):
    mu = MeasureSpec.lebesgue(3)
    balls = generate_balls(BallSequenceSpec(), mu, 5, rng)
    rects = shrink_sequence(
        balls, (1.0, 1.5, 2.0), RotationPolicy.RANDOM_ORTHOGONAL, np.random.default_rng(4)
    )
    for rect in rects:
        o = rect.rotation.as_array()
        assert np.allclose(o.T @ o, np.eye(3), atol=1e-12)
    with pytest.raises(InvalidParameterError):
        shrink_sequence(balls, (1.0, 1.5, 2.0), RotationPolicy.RANDOM_ORTHOGONAL)


def test_fixed_angle_rotations_cycle(lebesgue2, rng):
    balls = generate_balls(BallSequenceSpec(), lebesgue2, 4, rng)[1:]
    rects = shrink_sequence(balls, (1.0, 2.0), RotationPolicy.FIXED_ANGLES, angles=(0.0, 0.5))
    assert rects[0].rotation == rects[2].rotation
    assert rects[0].rotation != rects[1].rotation


def test_coverage_of_dyadic_grid(lebesgue1):
    # every level-3 interval as a closed ball
    balls = [Ball(Point(((k + 0.5) / 8,)), 1 / 16) for k in range(8)]
    report = coverage_diagnostics(lebesgue1, balls, 3, ladder=[1, 100])
    assert report.tail_starts == [1, 100]
    assert report.covered_mass == [1.0, 0.0]


def test_coverage_of_iid_sequence(lebesgue2, rng):
    balls = generate_balls(BallSequenceSpec(), lebesgue2, 2000, rng)
    report = coverage_diagnostics(lebesgue2, balls, 8)
    assert report.tail_starts[0] == 1
    assert report.covered_mass[0] >= 0.99
    assert all(a >= b for a, b in zip(report.covered_mass, report.covered_mass[1:]))
    assert report.mass_upper_sum >= report.covered_mass[0]


def test_ball_stream_stays_in_cube(lebesgue2, rng):
    cube = DyadicCube(3, (2, 5))
    stream = ball_stream_for_cube(BallSequenceSpec(), lebesgue2, cube, 40, rng, max_radius=cube.side / 16)
    assert len(stream) == 40
    lo, hi = cube.lower(), cube.upper()
    for ball in stream:
        assert ball.radius <= cube.side / 16 * (1 + 1e-12)
        x = ball.center.as_array()
        assert np.all(x >= lo) and np.all(x <= hi)


def test_jarnik_stream_in_cube(lebesgue1, rng):
    cube = DyadicCube(2, (1,))
    stream = ball_stream_for_cube(
        BallSequenceSpec(kind=SequenceKind.JARNIK), lebesgue1, cube, 10, rng, max_radius=0.01
    )
    assert len(stream) == 10
    assert all(b.radius <= 0.01 and 0.25 <= b.center.coords[0] <= 0.5 for b in stream)
