import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdcavity.geometry import (ArcSegment, BoundaryTag, CavityGeometry, InvalidGeometry,
                                LineSegment, Trapezoid, build_boundary, point_in_domain,
                                rectangle_domain, triangular_cavity_geometry)


def test_default_loops_structure(cavity):
    outer, hole = build_boundary(cavity)
    assert sum(isinstance(s, ArcSegment) for s in outer) == 2
    assert len(hole) == 4 and all(isinstance(s, LineSegment) for s in hole)
    assert outer.signed_area() > 0 > hole.signed_area()


def test_bottom_wall_split_into_three_kinds(cavity):
    tags = {s.tag for s in build_boundary(cavity)[0]}
    assert {BoundaryTag.BottomAdiabatic, BoundaryTag.HeaterLeft,
            BoundaryTag.HeaterRight} <= tags


def test_loops_close(cavity):
    for loop in build_boundary(cavity):
        assert loop.closure_gap() < 1e-12


def test_every_segment_tagged_and_lengths_sum(cavity):
    loops = build_boundary(cavity)
    total = sum(s.length for loop in loops for s in loop)
    assert all(isinstance(s.tag, BoundaryTag) for loop in loops for s in loop)
    assert total == pytest.approx(cavity.perimeter, rel=1e-12)
    W, r = cavity.aspect_ratio, cavity.heater_radius
    c = cavity.trapezoid.corners()
    hole = np.sum(np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1))
    assert total == pytest.approx(2 * W + 2 - 4 * r + 2 * math.pi * r + hole, rel=1e-12)


def test_heater_into_side_wall_rejected():
    with pytest.raises(InvalidGeometry, match="left wall"):
        CavityGeometry(heater_centers=(0.1, 1.9))


@pytest.mark.parametrize("kw, match", [
    ({"aspect_ratio": -1.0}, "aspect_ratio"),
    ({"heater_centers": (1.0, 0.9)}, "overlap"),
    ({"heater_radius": 0.0}, "heater_radius"),
    ({"trapezoid": Trapezoid(top_half_width=0.4)}, "bottom_half_width"),
    ({"trapezoid": Trapezoid(base_y=0.8)}, "strictly inside"),
    ({"trapezoid": Trapezoid(center_x=0.6, base_y=0.1)}, "intersects the trapezoid"),
    ({"aspect_ratio": float("nan")}, "finite"),
])
def test_invalid_geometry_reports_constraint(kw, match):
    with pytest.raises(InvalidGeometry, match=match):
        CavityGeometry(**kw)


def test_rectangular_hole_allowed():
    g = CavityGeometry(trapezoid=Trapezoid(top_half_width=0.3, bottom_half_width=0.3))
    assert len(build_boundary(g)[1]) == 4


def test_point_membership(cavity):
    assert not point_in_domain(cavity, cavity.trapezoid.centroid)
    assert not point_in_domain(cavity, (cavity.heater_centers[0], cavity.heater_radius / 2))
    assert point_in_domain(cavity, (cavity.aspect_ratio / 2, 0.95))
    assert not point_in_domain(cavity, (-0.1, 0.5))


def test_monte_carlo_area(cavity):
    rng = np.random.default_rng(7)
    n = 200_000
    pts = rng.uniform([0, 0], [cavity.aspect_ratio, 1.0], size=(n, 2))
    frac = cavity.contains(pts).mean()
    est = frac * cavity.aspect_ratio
    exact = cavity.aspect_ratio - cavity.trapezoid.area - math.pi * cavity.heater_radius**2
    sigma = cavity.aspect_ratio * math.sqrt(frac * (1 - frac) / n)
    assert abs(est - exact) < 4 * sigma
    assert cavity.area == pytest.approx(exact, rel=1e-12)


def _segments_intersect(p, q, r, s):
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return (orient(p, q, r) * orient(p, q, s) < 0) and (orient(r, s, p) * orient(r, s, q) < 0)


def test_loops_do_not_self_intersect(cavity):
    chords = []
    for loop in build_boundary(cavity):
        for seg in loop:
            pts = seg.discretize(0.05, cavity.arc_chord_tolerance)
            chords += list(zip(pts[:-1], pts[1:]))
    for i in range(len(chords)):
        for j in range(i + 1, len(chords)):
            assert not _segments_intersect(*chords[i], *chords[j])


def test_arc_discretization_respects_sagitta():
    arc = ArcSegment((0.5, 0.0), 0.15, math.pi, 0.0, BoundaryTag.HeaterLeft)
    pts = arc.discretize(1.0, 1e-4)
    d = np.linalg.norm(pts - np.array([0.5, 0.0]), axis=1)
    assert np.allclose(d, 0.15)
    mids = 0.5 * (pts[1:] + pts[:-1])
    assert (0.15 - np.linalg.norm(mids - [0.5, 0.0], axis=1)).max() <= 1e-4


def test_triangular_cavity():
    dom = triangular_cavity_geometry(1.0)
    loop, = dom.loops()
    assert len(loop) == 3
    assert loop.perimeter == pytest.approx(2 + math.sqrt(2))
    assert loop.signed_area() == pytest.approx(0.5)
    tags = {s.tag for s in loop}
    assert tags == {BoundaryTag.SlidingWall, BoundaryTag.HeatedWall,
                    BoundaryTag.BottomAdiabatic}
    with pytest.raises(InvalidGeometry):
        triangular_cavity_geometry(0.0)


def test_rectangle_domain_area():
    assert rectangle_domain(2.0, 0.5).area == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0.05, 0.2), x0=st.floats(0.25, 0.6), dx=st.floats(0.9, 1.2),
       ar=st.floats(1.8, 2.4))
def test_area_identity_random_geometry(r, x0, dx, ar):
    x1 = x0 + dx
    try:
        g = CavityGeometry(aspect_ratio=ar, heater_radius=r, heater_centers=(x0, x1),
                           trapezoid=Trapezoid(center_x=ar / 2))
    except InvalidGeometry:
        return
    outer, hole = g.loops()
    assert outer.closure_gap() < 1e-12 and hole.closure_gap() < 1e-12
    assert outer.signed_area() + hole.signed_area() == pytest.approx(
        ar - g.trapezoid.area - math.pi * r**2, rel=1e-10)
