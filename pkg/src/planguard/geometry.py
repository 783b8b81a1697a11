"""Planar shape primitives and signed distances between them.

Shapes are expressed in world coordinates. Signed distance is positive when
two shapes are disjoint (the gap between their boundaries), negative when
they overlap (penetration depth, i.e. the smallest translation that would
separate them), and zero at touching contact. The function is symmetric in
its arguments.

Supported shapes: Point, Circle, ConvexPolygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError(f"circle radius must be positive, got {self.radius}")


class ConvexPolygon:
    """Convex polygon given by its vertices, stored counter-clockwise."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ValueError("polygon needs an (n, 2) array with n >= 3")
        area2 = _signed_area2(v)
        if area2 < 0.0:
            v = v[::-1].copy()
            area2 = -area2
        if area2 <= _EPS:
            raise ValueError("polygon is degenerate (zero area)")
        _check_convex(v)
        self.vertices = v

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()})"

    def contains(self, p) -> bool:
        """True when p lies inside or on the boundary."""
        px, py = float(p[0]), float(p[1])
        v = self.vertices
        n = len(v)
        for i in range(n):
            ax, ay = v[i]
            bx, by = v[(i + 1) % n]
            # CCW order: inside points sit left of every edge
            if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < -_EPS:
                return False
        return True


Shape = Point | Circle | ConvexPolygon


def _signed_area2(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _check_convex(v: np.ndarray) -> None:
    n = len(v)
    scale = max(1.0, float(np.abs(v).max()))
    for i in range(n):
        a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if cross < -1e-9 * scale * scale:
            raise ValueError("polygon is not convex")


def point_segment_distance(px, py, ax, ay, bx, by) -> float:
    """Distance from (px, py) to the segment a-b."""
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 <= _EPS:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _point_polygon_signed(px: float, py: float, poly: ConvexPolygon) -> float:
    v = poly.vertices
    n = len(v)
    best = math.inf
    inside = True
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        d = point_segment_distance(px, py, ax, ay, bx, by)
        if d < best:
            best = d
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < 0.0:
            inside = False
    return -best if inside else best


def _polygon_gap(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Boundary-to-boundary distance for disjoint convex polygons.

    For disjoint convex polygons the closest pair of points lies on a
    vertex-edge (or vertex-vertex) feature, so the minimum over all
    vertex-to-edge distances in both directions is exact.
    """
    best = math.inf
    for p, q in ((a, b), (b, a)):
        vq = q.vertices
        nq = len(vq)
        for px, py in p.vertices:
            for i in range(nq):
                ax, ay = vq[i]
                bx, by = vq[(i + 1) % nq]
                d = point_segment_distance(px, py, ax, ay, bx, by)
                if d < best:
                    best = d
    return best


def _polygon_penetration(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Minimal translation distance for overlapping convex polygons.

    Separating-axis form: project both polygons on every edge normal; the
    smallest interval overlap over those axes is the penetration depth.
    """
    best = math.inf
    for poly in (a, b):
        v = poly.vertices
        n = len(v)
        for i in range(n):
            ex, ey = v[(i + 1) % n] - v[i]
            L = math.hypot(ex, ey)
            if L <= _EPS:
                continue
            nx, ny = ey / L, -ex / L
            pa = a.vertices @ (nx, ny)
            pb = b.vertices @ (nx, ny)
            # push-out distance along the axis; handles nested intervals
            overlap = min(pa.max() - pb.min(), pb.max() - pa.min())
            if overlap < best:
                best = overlap
    return best


def _polygons_intersect(a: ConvexPolygon, b: ConvexPolygon) -> bool:
    for poly in (a, b):
        v = poly.vertices
        n = len(v)
        for i in range(n):
            ex, ey = v[(i + 1) % n] - v[i]
            L = math.hypot(ex, ey)
            if L <= _EPS:
                continue
            nx, ny = ey / L, -ex / L
            pa = a.vertices @ (nx, ny)
            pb = b.vertices @ (nx, ny)
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def point_shape_distance_gradient(p, shape: Shape) -> tuple[float, np.ndarray]:
    """Signed distance from a point to a shape and its gradient in the point.

    The gradient is the unit direction in which moving the point increases
    the signed distance fastest (well defined almost everywhere; at the rare
    non-smooth loci a deterministic unit fallback is returned).
    """
    px, py = float(p[0]), float(p[1])
    if isinstance(shape, Point):
        dx, dy = px - shape.x, py - shape.y
        d = math.hypot(dx, dy)
        if d <= _EPS:
            return 0.0, np.array([1.0, 0.0])
        return d, np.array([dx / d, dy / d])
    if isinstance(shape, Circle):
        dx, dy = px - shape.center[0], py - shape.center[1]
        d = math.hypot(dx, dy)
        if d <= _EPS:
            return -shape.radius, np.array([1.0, 0.0])
        return d - shape.radius, np.array([dx / d, dy / d])
    if isinstance(shape, ConvexPolygon):
        v = shape.vertices
        n = len(v)
        best = math.inf
        qx = qy = 0.0
        inside = True
        for i in range(n):
            ax, ay = v[i]
            bx, by = v[(i + 1) % n]
            ex, ey = bx - ax, by - ay
            L2 = ex * ex + ey * ey
            t = 0.0 if L2 <= _EPS else ((px - ax) * ex + (py - ay) * ey) / L2
            t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
            cx, cy = ax + t * ex, ay + t * ey
            d = math.hypot(px - cx, py - cy)
            if d < best:
                best, qx, qy = d, cx, cy
            if ex * (py - ay) - ey * (px - ax) < 0.0:
                inside = False
        if best <= _EPS:
            return 0.0, np.array([1.0, 0.0])
        g = np.array([(px - qx) / best, (py - qy) / best])
        if inside:
            return -best, -g
        return best, g
    raise TypeError(f"unsupported shape type: {type(shape).__name__}")


def signed_distance(a: Shape, b: Shape) -> float:
    """Signed distance between two shapes (symmetric).

    Positive: gap between disjoint shapes. Negative: penetration depth.
    """
    # order the pair so we only dispatch one triangle of the type matrix
    rank = {Point: 0, Circle: 1, ConvexPolygon: 2}
    try:
        ra, rb = rank[type(a)], rank[type(b)]
    except KeyError as e:
        raise TypeError(f"unsupported shape type: {e}") from None
    if ra > rb:
        a, b = b, a

    if isinstance(a, Point) and isinstance(b, Point):
        return math.hypot(a.x - b.x, a.y - b.y)
    if isinstance(a, Point) and isinstance(b, Circle):
        return math.hypot(a.x - b.center[0], a.y - b.center[1]) - b.radius
    if isinstance(a, Point) and isinstance(b, ConvexPolygon):
        return _point_polygon_signed(a.x, a.y, b)
    if isinstance(a, Circle) and isinstance(b, Circle):
        d = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
        return d - a.radius - b.radius
    if isinstance(a, Circle) and isinstance(b, ConvexPolygon):
        return _point_polygon_signed(a.center[0], a.center[1], b) - a.radius
    if isinstance(a, ConvexPolygon) and isinstance(b, ConvexPolygon):
        if _polygons_intersect(a, b):
            return -_polygon_penetration(a, b)
        return _polygon_gap(a, b)
    raise TypeError("unsupported shape pair")


def transform_polygon(local_vertices, x: float, y: float, theta: float) -> ConvexPolygon:
    """Place a local-frame convex footprint at pose (x, y, theta)."""
    v = np.asarray(local_vertices, dtype=np.float64)
    c, s = math.cos(theta), math.sin(theta)
    world = np.empty_like(v)
    world[:, 0] = x + c * v[:, 0] - s * v[:, 1]
    world[:, 1] = y + s * v[:, 0] + c * v[:, 1]
    return ConvexPolygon(world)
