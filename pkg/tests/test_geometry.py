import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from geomprobe.geometry import (PHI, Point2D, TargetConstant, angle_at, construct_equilateral,
                                construct_golden_rectangle, distance, inscribed_circumscribed, propagate_mc, ratio)
from geomprobe.survey import Measurement, Unit


def test_ratio_examples():
    r = ratio(Measurement(3200, 8), Measurement(1948, 15))
    assert round(r.value, 3) == 1.643 and round(r.sigma, 3) == 0.013
    assert r.unit is Unit.DIMENSIONLESS
    r = ratio(Measurement(1422, 8), Measurement(1043, 10))
    assert round(r.value, 3) == 1.363 and round(r.sigma, 3) == 0.015
    r = ratio(Measurement(7.5, 0), Measurement(7.5, 0))
    assert (r.value, r.sigma) == (1, 0)


def test_ratio_errors():
    with pytest.raises(ZeroDivisionError):
        ratio(Measurement(1, 0), Measurement(0, 0))
    with pytest.raises(ValueError):
        ratio(Measurement(1, 0, Unit.DEG), Measurement(1, 0, Unit.CM))


def test_ratio_sigma_matches_monte_carlo():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a = Measurement(rng.uniform(500, 3000), rng.uniform(2, 20))
        b = Measurement(rng.uniform(500, 3000), rng.uniform(2, 20))
        _, sd = propagate_mc(lambda x, y: x / y, [a, b], n=100_000, seed=1)
        assert abs(ratio(a, b).sigma / sd - 1) < 0.05


def test_distance():
    d = distance(Point2D(0, 0, 1), Point2D(3, 4, 1))
    assert_allclose([d.value, d.sigma], [5, math.sqrt(2)])
    d = distance(Point2D(2, 2, 3), Point2D(2, 2, 4))
    assert (d.value, d.sigma) == (0, 5)


def test_distance_sigma_matches_monte_carlo():
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = Point2D(*rng.uniform(0, 1000, 2), sigma=rng.uniform(1, 10))
        q = Point2D(*rng.uniform(0, 1000, 2), sigma=rng.uniform(1, 10))
        inputs = [Measurement(p.x, p.sigma), Measurement(p.y, p.sigma),
                  Measurement(q.x, q.sigma), Measurement(q.y, q.sigma)]
        _, sd = propagate_mc(lambda a, b, c, d: np.hypot(c - a, d - b), inputs, n=100_000, seed=2)
        assert abs(distance(p, q).sigma / sd - 1) < 0.05


def test_angles():
    a = angle_at(Point2D(0, 0), Point2D(1, 0), Point2D(0, 1))
    assert_allclose([a.value, a.sigma], [90, 0], atol=1e-12)
    assert a.unit is Unit.DEG
    apex = construct_equilateral((0, 0), (1, 0))
    assert_allclose(angle_at(Point2D(0, 0), Point2D(1, 0), apex).value, 60, atol=1e-12)
    a = angle_at(Point2D(0, 0), Point2D(4, 0), Point2D(4, 3))
    assert_allclose(a.value, 36.8699, atol=5e-5)
    with pytest.raises(ValueError):
        angle_at(Point2D(0, 0), Point2D(0, 0), Point2D(1, 1))


def test_equilateral_apex():
    apex = construct_equilateral((0, 0), (1, 0))
    assert_allclose([apex.x, apex.y], [0.5, math.sqrt(3) / 2], atol=1e-15)
    apex = construct_equilateral((0, 0), (2, 0))
    assert_allclose([apex.x, apex.y], [1, math.sqrt(3)], atol=1e-15)
    # apex sits to the left of a -> b
    apex = construct_equilateral((1, 0), (0, 0))
    assert apex.y < 0
    with pytest.raises(ValueError):
        construct_equilateral((1, 1), (1, 1))


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_equilateral_apex_is_equidistant(ax, ay, bx, by):
    side = math.hypot(bx - ax, by - ay)
    if side < 1e-3:
        return
    apex = construct_equilateral((ax, ay), (bx, by))
    da = math.hypot(apex.x - ax, apex.y - ay)
    db = math.hypot(apex.x - bx, apex.y - by)
    assert abs(da - side) <= 1e-12 * max(side, 1)
    assert abs(db - side) <= 1e-12 * max(side, 1)


def test_golden_rectangle():
    g = construct_golden_rectangle(1)
    assert_allclose(g.length, 1.6180339887, atol=1e-10)
    g = construct_golden_rectangle(1948)
    assert_allclose(g.length, 3151.93, atol=0.005)
    with pytest.raises(ValueError):
        construct_golden_rectangle(0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e6), st.floats(0, 2 * math.pi))
def test_golden_rectangle_ratio_is_phi(side, theta):
    g = construct_golden_rectangle(side, (10.0, -5.0), theta)
    assert abs(g.length / g.width - PHI) <= 1e-12
    corners = np.asarray(g.corners)
    assert_allclose(np.linalg.norm(corners[1] - corners[0]), g.length, rtol=1e-12)


def test_inscribed_circumscribed():
    assert_allclose(inscribed_circumscribed(2), (1, math.sqrt(2)))
    inner, outer = inscribed_circumscribed(540)
    assert_allclose([inner, outer], [270, 381.84], atol=0.005)
    with pytest.raises(ValueError):
        inscribed_circumscribed(-1)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e9))
def test_inscribed_circumscribed_ratio(side):
    inner, outer = inscribed_circumscribed(side)
    assert abs((outer / inner) ** 2 - 2) <= 1e-12


def test_target_constants():
    assert TargetConstant.parse("16/3").value == 16 / 3
    assert TargetConstant.parse("sqrt2") == TargetConstant.parse("√2")
    assert_allclose(TargetConstant.parse("phi").value, (1 + math.sqrt(5)) / 2)
    assert_allclose(TargetConstant.parse("6sqrt2").value, 6 * math.sqrt(2))
    assert_allclose(TargetConstant.parse("32/9*sqrt2").value, 32 * math.sqrt(2) / 9)
    assert TargetConstant(2, 4) == TargetConstant(1, 2)
    assert TargetConstant(1, 1, 8) == TargetConstant(2, 1, 2)
    assert str(TargetConstant(64, 9)) == "64/9"


@given(st.lists(st.tuples(st.integers(1, 50), st.integers(1, 20), st.sampled_from([1, 2, 3, 5])),
                min_size=2, max_size=8))
def test_target_ordering_follows_value(items):
    consts = [TargetConstant(p, q, d) for p, q, d in items]
    values = [c.value for c in sorted(consts)]
    assert values == sorted(values)
