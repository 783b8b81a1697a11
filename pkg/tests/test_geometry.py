"""Signed-distance checks against a dense-sampling brute-force oracle."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from planguard.geometry import (
    Circle,
    ConvexPolygon,
    Point,
    point_shape_distance_gradient,
    signed_distance,
    transform_polygon,
)

# ---------------------------------------------------------------- oracle ---
# Brute force: sample shape boundaries densely, use only elementary
# point-to-feature distances and containment tests. Penetration depth for
# polygon pairs comes from projection overlap over a dense set of directions.


def _boundary_samples(shape, n=800):
    if isinstance(shape, Point):
        return np.array([[shape.x, shape.y]])
    if isinstance(shape, Circle):
        t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        cx, cy = shape.center
        return np.column_stack([cx + shape.radius * np.cos(t), cy + shape.radius * np.sin(t)])
    v = shape.vertices
    edges = [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]
    lengths = [math.hypot(*(b - a)) for a, b in edges]
    total = sum(lengths)
    pts = []
    for (a, b), L in zip(edges, lengths):
        k = max(2, int(round(n * L / total)))
        for t in np.linspace(0.0, 1.0, k, endpoint=False):
            pts.append(a + t * (b - a))
    return np.array(pts)


def _contains(shape, p) -> bool:
    if isinstance(shape, Point):
        return False
    if isinstance(shape, Circle):
        return math.hypot(p[0] - shape.center[0], p[1] - shape.center[1]) <= shape.radius
    v = shape.vertices
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < -1e-12:
            return False
    return True


def _point_to_boundary(p, shape) -> float:
    if isinstance(shape, Point):
        return math.hypot(p[0] - shape.x, p[1] - shape.y)
    if isinstance(shape, Circle):
        return abs(math.hypot(p[0] - shape.center[0], p[1] - shape.center[1]) - shape.radius)
    v = shape.vertices
    best = math.inf
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        ex, ey = b[0] - a[0], b[1] - a[1]
        L2 = ex * ex + ey * ey
        t = 0.0 if L2 == 0 else ((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / L2
        t = min(1.0, max(0.0, t))
        best = min(best, math.hypot(p[0] - (a[0] + t * ex), p[1] - (a[1] + t * ey)))
    return best


def _support_interval(shape, d):
    """Projection interval of the shape onto unit direction d."""
    if isinstance(shape, Point):
        s = shape.x * d[0] + shape.y * d[1]
        return s, s
    if isinstance(shape, Circle):
        s = shape.center[0] * d[0] + shape.center[1] * d[1]
        return s - shape.radius, s + shape.radius
    proj = shape.vertices @ d
    return float(proj.min()), float(proj.max())


def _edge_normals(shape):
    if not isinstance(shape, ConvexPolygon):
        return []
    v = shape.vertices
    out = []
    for i in range(len(v)):
        e = v[(i + 1) % len(v)] - v[i]
        L = math.hypot(e[0], e[1])
        if L > 0:
            out.append(np.array([e[1] / L, -e[0] / L]))
    return out


def oracle_signed_distance(a, b, n=800, directions=1440) -> float:
    sa, sb = _boundary_samples(a, n), _boundary_samples(b, n)
    overlapping = any(_contains(b, p) for p in sa) or any(_contains(a, p) for p in sb)
    if not overlapping:
        gap = min(min(_point_to_boundary(p, b) for p in sa), min(_point_to_boundary(p, a) for p in sb))
        return gap
    dirs = [np.array([math.cos(t), math.sin(t)]) for t in np.linspace(0, math.pi, directions, endpoint=False)]
    dirs += _edge_normals(a) + _edge_normals(b)
    depth = math.inf
    for d in dirs:
        lo_a, hi_a = _support_interval(a, d)
        lo_b, hi_b = _support_interval(b, d)
        # translation along d that separates the projections
        depth = min(depth, min(hi_a - lo_b, hi_b - lo_a))
    return -depth


# ------------------------------------------------------------- strategies ---

coords = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)


@st.composite
def circles(draw):
    return Circle(
        (draw(coords), draw(coords)),
        draw(st.floats(min_value=0.05, max_value=2.0)),
    )


@st.composite
def polygons(draw):
    # regular-ish convex polygon: random center, radii, angular jitter
    cx, cy = draw(coords), draw(coords)
    k = draw(st.integers(min_value=3, max_value=7))
    base = draw(st.floats(min_value=0.2, max_value=1.8))
    pts = []
    for i in range(k):
        ang = 2 * math.pi * i / k + draw(st.floats(min_value=-0.3, max_value=0.3))
        r = base * draw(st.floats(min_value=0.7, max_value=1.3))
        pts.append((cx + r * math.cos(ang), cy + r * math.sin(ang)))
    try:
        return ConvexPolygon(pts)
    except ValueError:
        assume(False)


@st.composite
def points(draw):
    return Point(draw(coords), draw(coords))


shapes = st.one_of(points(), circles(), polygons())


# ------------------------------------------------------------------ tests ---


def test_point_vs_unit_square_frozen_value():
    # frozen via the sampling oracle: gap from origin to a unit square at (2, 0)
    square = ConvexPolygon([(1.5, -0.5), (2.5, -0.5), (2.5, 0.5), (1.5, 0.5)])
    p = Point(0.0, 0.0)
    assert signed_distance(p, square) == pytest.approx(1.5, abs=1e-12)
    assert oracle_signed_distance(p, square) == pytest.approx(1.5, abs=1e-3)


def test_circle_circle_gap_is_distance_minus_radii():
    a = Circle((0.0, 0.0), 0.5)
    b = Circle((3.0, 4.0), 1.0)
    assert signed_distance(a, b) == pytest.approx(5.0 - 1.5, abs=1e-12)


def test_overlapping_circles_penetration():
    a = Circle((0.0, 0.0), 1.0)
    b = Circle((1.0, 0.0), 1.0)
    assert signed_distance(a, b) == pytest.approx(-1.0, abs=1e-12)


def test_point_inside_polygon_is_negative():
    square = ConvexPolygon([(-1, -1), (1, -1), (1, 1), (-1, 1)])
    assert signed_distance(Point(0.2, 0.0), square) == pytest.approx(-0.8, abs=1e-12)


def test_polygon_polygon_disjoint_gap():
    a = ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    b = ConvexPolygon([(2.5, 0), (3.5, 0), (3.5, 1), (2.5, 1)])
    assert signed_distance(a, b) == pytest.approx(1.5, abs=1e-12)
    assert signed_distance(a, b) == pytest.approx(oracle_signed_distance(a, b), abs=1e-3)


def test_polygon_polygon_penetration_matches_oracle():
    a = ConvexPolygon([(0, 0), (2, 0), (2, 2), (0, 2)])
    b = ConvexPolygon([(1.5, 0.5), (3.5, 0.5), (3.5, 1.5), (1.5, 1.5)])
    got = signed_distance(a, b)
    assert got < 0
    assert got == pytest.approx(oracle_signed_distance(a, b), abs=1e-3)


def test_clockwise_vertices_are_normalized():
    cw = ConvexPolygon([(0, 0), (0, 1), (1, 1), (1, 0)])
    assert signed_distance(Point(0.5, 0.5), cw) == pytest.approx(-0.5, abs=1e-12)


def test_nonconvex_polygon_rejected():
    with pytest.raises(ValueError):
        ConvexPolygon([(0, 0), (2, 0), (0.2, 0.2), (0, 2)])


def test_degenerate_polygon_rejected():
    with pytest.raises(ValueError):
        ConvexPolygon([(0, 0), (1, 0), (2, 0)])


def test_transform_polygon_rotates_about_pose():
    poly = transform_polygon([(-1, -0.5), (1, -0.5), (1, 0.5), (-1, 0.5)], 2.0, 3.0, math.pi / 2)
    # after a quarter turn the long axis is vertical
    assert np.allclose(sorted(poly.vertices[:, 0]), [1.5, 1.5, 2.5, 2.5])
    assert np.allclose(sorted(poly.vertices[:, 1]), [2.0, 2.0, 4.0, 4.0])


@settings(max_examples=120, deadline=None)
@given(shapes, shapes)
def test_signed_distance_symmetric_and_matches_oracle(a, b):
    d_ab = signed_distance(a, b)
    d_ba = signed_distance(b, a)
    assert d_ab == pytest.approx(d_ba, abs=1e-12)
    assert d_ab == pytest.approx(oracle_signed_distance(a, b), abs=1e-3)


@settings(max_examples=80, deadline=None)
@given(shapes, shapes, st.floats(min_value=-1.0, max_value=1.0), st.floats(min_value=-1.0, max_value=1.0))
def test_signed_distance_translation_lipschitz(a, b, tx, ty):
    # moving one shape by t changes the signed distance by at most |t|
    def shift(s):
        if isinstance(s, Point):
            return Point(s.x + tx, s.y + ty)
        if isinstance(s, Circle):
            return Circle((s.center[0] + tx, s.center[1] + ty), s.radius)
        return ConvexPolygon(s.vertices + np.array([tx, ty]))

    d0 = signed_distance(a, b)
    d1 = signed_distance(a, shift(b))
    assert abs(d1 - d0) <= math.hypot(tx, ty) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.one_of(circles(), polygons()), coords, coords)
def test_point_gradient_matches_finite_differences(shape, px, py):
    d, g = point_shape_distance_gradient((px, py), shape)
    assume(abs(d) > 1e-2)
    assert math.hypot(g[0], g[1]) == pytest.approx(1.0, abs=1e-9)
    h = 1e-6
    gx = (
        point_shape_distance_gradient((px + h, py), shape)[0]
        - point_shape_distance_gradient((px - h, py), shape)[0]
    ) / (2 * h)
    gy = (
        point_shape_distance_gradient((px, py + h), shape)[0]
        - point_shape_distance_gradient((px, py - h), shape)[0]
    ) / (2 * h)
    # away from non-smooth loci the numeric gradient matches
    assume(abs(gx - g[0]) < 0.5 and abs(gy - g[1]) < 0.5)
    assert gx == pytest.approx(g[0], abs=1e-4)
    assert gy == pytest.approx(g[1], abs=1e-4)
