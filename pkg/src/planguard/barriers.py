"""Control-barrier-function safety layer.

A barrier certifies one scalar condition ``h(x) >= 0`` for one control
slice of one robot (its mobile base or its end effector).  Each control
tick the filter linearizes every barrier attached to a slice into a
half-space constraint on that slice's control input and solves a small
quadratic program that stays as close as possible to the nominal
command:

    u* = argmin ||u - u_nom||^2
         s.t.   a_i . u + b_i >= 0   for every barrier i
                lower <= u <= upper

Slice dynamics
--------------
base  : state (x, y, theta); control is the world-frame twist
        (vx, vy, omega) applied directly (velocity-controlled base).
ee    : state (px, py, pz, vx, vy, vz); control is the acceleration
        (ax, ay, az) (double-integrator arm point).

Linearized rows
---------------
relative degree 1:  a = Lg h            b = Lf h + gamma * h
relative degree 2:  a = Lf Lg h         b = Lf^2 h + k0 * h + k1 * hdot

The degree-2 gains come from pole placement on the closed-loop error
dynamics ``hddot + k1 hdot + k0 h = 0``: for poles (p1, p2) both in the
open left half plane, ``k0 = p1 * p2`` and ``k1 = -(p1 + p2)``.

If the QP is infeasible (conflicting certificates) the filter falls
back to braking: a zero twist for the base, ``u = -k_brake * v`` for
the end effector, clipped to the control box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .qp import INFEASIBLE, ConstraintRow, QpProblem, QpSolution, solve_qp

__all__ = [
    "BASE", "EE",
    "Barrier", "BarrierTerms", "GainSpec", "SafeControlResult",
    "pole_placement_gains", "linearize", "safe_control",
    "position_box", "velocity_box", "workspace_polygon", "keep_out",
    "separation", "keep_away", "speed_cap_near", "reach_envelope",
    "HalfspaceBarrier", "VelocityFaceBarrier", "DistanceBarrier",
    "ShapeDistanceBarrier", "SpeedCapBarrier",
]

BASE = "base"
EE = "ee"

_FD_STEP = 1e-6          # central-difference step for first derivatives
_FD_OUTER_STEP = 1e-4    # directional step for the nested second derivative
_MIN_DIST = 1e-9         # guard against vanishing separation vectors

# target callables report the live planar or spatial state of another
# entity as (position, velocity) arrays
TargetFn = Callable[[], tuple[np.ndarray, np.ndarray]]


def pole_placement_gains(poles: Sequence[float] = (-2.0, -2.0)) -> np.ndarray:
    """Gains [k0, k1] so hddot + k1*hdot + k0*h = 0 has the given poles.

    Both poles must be strictly negative (real, stable).  The returned
    gains satisfy ``s^2 + k1 s + k0 = (s - p1)(s - p2)`` exactly.
    """
    if len(poles) != 2:
        raise ValueError("exactly two poles are required")
    p1, p2 = float(poles[0]), float(poles[1])
    if not (p1 < 0.0 and p2 < 0.0):
        raise ValueError(f"poles must be strictly negative, got {poles}")
    return np.array([p1 * p2, -(p1 + p2)])


@dataclass(frozen=True)
class GainSpec:
    """Gains for the linearized barrier rows.

    gamma scales relative-degree-1 rows; (k0, k1) scale degree-2 rows.
    margin shifts the enforced level set to h >= margin, absorbing the
    overshoot of zero-order-hold sampling so the true h stays above
    zero between control ticks.
    """

    gamma: float = 2.0
    k0: float = 4.0
    k1: float = 4.0
    margin: float = 0.0

    def __post_init__(self) -> None:
        if self.gamma <= 0.0 or self.k0 <= 0.0 or self.k1 <= 0.0:
            raise ValueError("barrier gains must be strictly positive")
        if self.margin < 0.0:
            raise ValueError("margin must be non-negative")

    @classmethod
    def from_poles(
        cls,
        poles: Sequence[float] = (-2.0, -2.0),
        gamma: float = 2.0,
        margin: float = 0.0,
    ) -> "GainSpec":
        k0, k1 = pole_placement_gains(poles)
        return cls(gamma=gamma, k0=float(k0), k1=float(k1), margin=margin)


class BarrierTerms(NamedTuple):
    """Ingredients of one linearized barrier row.

    h      : current barrier value
    a      : coefficient of the control in hdot (degree 1) or hddot
             (degree 2), expressed over the subject slice's 3 controls
    drift  : control-independent part of hdot (degree 1) or hddot
             (degree 2)
    hdot   : current barrier rate (degree-2 barriers only)
    """

    h: float
    a: np.ndarray
    drift: float
    hdot: float = 0.0


class Barrier:
    """One scalar safety condition h(x) >= 0 on a robot control slice.

    Subclasses either override :meth:`terms` with analytic expressions
    or just implement :meth:`value`, in which case derivatives come
    from central finite differences.  The fallback treats the
    environment as frozen between evaluations, so barriers that track
    moving targets should provide analytic terms.
    """

    name: str
    subject: tuple[str, str]
    relative_degree: int

    def __init__(self, name: str, subject: tuple[str, str], relative_degree: int) -> None:
        if subject[1] not in (BASE, EE):
            raise ValueError(f"unknown control slice {subject[1]!r}")
        if relative_degree not in (1, 2):
            raise ValueError("relative degree must be 1 or 2")
        if subject[1] == BASE and relative_degree != 1:
            raise ValueError("base barriers are relative degree 1 (velocity-controlled base)")
        self.name = name
        self.subject = subject
        self.relative_degree = relative_degree

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    # -- finite-difference fallback ------------------------------------
    def terms(self, x: np.ndarray) -> BarrierTerms:
        x = np.asarray(x, dtype=np.float64)
        h = float(self.value(x))
        if self.subject[1] == BASE:
            return BarrierTerms(h, _central_gradient(self.value, x), 0.0)
        p, v = x[:3], x[3:]

        def h_of_p(pp: np.ndarray) -> float:
            return float(self.value(np.concatenate([pp, v])))

        gp = _central_gradient(h_of_p, p)
        if self.relative_degree == 1:
            def h_of_v(vv: np.ndarray) -> float:
                return float(self.value(np.concatenate([p, vv])))

            return BarrierTerms(h, _central_gradient(h_of_v, v), float(gp @ v))
        # degree 2: hdot = grad_p h . v, hddot = v' H v + grad_p h . u
        hdot = float(gp @ v)
        speed = float(np.linalg.norm(v))
        if speed < _MIN_DIST:
            vhv = 0.0
        else:
            step = _FD_OUTER_STEP / speed
            g_plus = _central_gradient(h_of_p, p + step * v)
            g_minus = _central_gradient(h_of_p, p - step * v)
            vhv = float((g_plus - g_minus) @ v / (2.0 * step))
        return BarrierTerms(h, gp, vhv, hdot)


def _central_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    grad = np.empty(len(x))
    for j in range(len(x)):
        e = np.zeros(len(x))
        e[j] = _FD_STEP
        grad[j] = (fn(x + e) - fn(x - e)) / (2.0 * _FD_STEP)
    return grad


# ---------------------------------------------------------------------------
# concrete barrier families


class HalfspaceBarrier(Barrier):
    """h = n . p + c on the subject position (base planar, ee spatial)."""

    def __init__(self, name: str, subject: tuple[str, str], normal: np.ndarray, offset: float) -> None:
        kind = subject[1]
        super().__init__(name, subject, 1 if kind == BASE else 2)
        normal = np.asarray(normal, dtype=np.float64)
        expect = 2 if kind == BASE else 3
        if normal.shape != (expect,):
            raise ValueError(f"{kind} half-space normal must have shape ({expect},)")
        self.normal = normal
        self.offset = float(offset)
        if kind == BASE:
            self._a = np.array([normal[0], normal[1], 0.0])
            self._n = (float(normal[0]), float(normal[1]), 0.0)
        else:
            self._a = normal.copy()
            self._n = (float(normal[0]), float(normal[1]), float(normal[2]))

    def value(self, x: np.ndarray) -> float:
        n0, n1, n2 = self._n
        if self.subject[1] == BASE:
            return n0 * float(x[0]) + n1 * float(x[1]) + self.offset
        return n0 * float(x[0]) + n1 * float(x[1]) + n2 * float(x[2]) + self.offset

    def terms(self, x: np.ndarray) -> BarrierTerms:
        h = self.value(x)
        if self.relative_degree == 1:
            return BarrierTerms(h, self._a, 0.0)
        n0, n1, n2 = self._n
        hdot = n0 * float(x[3]) + n1 * float(x[4]) + n2 * float(x[5])
        return BarrierTerms(h, self._a, 0.0, hdot)


class VelocityFaceBarrier(Barrier):
    """h = n . v + c on the end-effector velocity (degree 1)."""

    def __init__(self, name: str, robot: str, normal: np.ndarray, offset: float) -> None:
        super().__init__(name, (robot, EE), 1)
        normal = np.asarray(normal, dtype=np.float64)
        if normal.shape != (3,):
            raise ValueError("velocity face normal must have shape (3,)")
        self.normal = normal
        self.offset = float(offset)
        self._n = (float(normal[0]), float(normal[1]), float(normal[2]))

    def value(self, x: np.ndarray) -> float:
        n0, n1, n2 = self._n
        return n0 * float(x[3]) + n1 * float(x[4]) + n2 * float(x[5]) + self.offset

    def terms(self, x: np.ndarray) -> BarrierTerms:
        return BarrierTerms(self.value(x), self.normal, 0.0)


class DistanceBarrier(Barrier):
    """Signed point-to-target distance barrier with a live target.

    sign=+1 keeps the subject at least ``radius`` away from the target
    (h = d - radius); sign=-1 keeps it within ``radius`` (h = radius - d,
    used for the reach envelope).  ``planar`` measures d in the ground
    plane (vertical-cylinder model); otherwise d is the full spatial
    distance (ee subjects only).
    """

    def __init__(
        self,
        name: str,
        subject: tuple[str, str],
        target: TargetFn,
        radius: float,
        *,
        sign: int = 1,
        planar: bool = True,
    ) -> None:
        kind = subject[1]
        super().__init__(name, subject, 1 if kind == BASE else 2)
        if kind == BASE and not planar:
            raise ValueError("base distance barriers are planar")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 (keep away) or -1 (keep within)")
        if radius <= 0.0:
            raise ValueError("radius must be positive")
        self.target = target
        self.radius = float(radius)
        self.sign = float(sign)
        self.planar = planar
        self._dim = 2 if planar else 3

    def _separation(self, x: np.ndarray):
        """Offsets to the target, its velocity, and the current distance."""
        q, vq = self.target()
        dim = self._dim
        if len(q) != dim or len(vq) != dim:
            raise ValueError(f"target must report ({dim},) position and velocity")
        if dim == 2:
            d = (float(x[0]) - float(q[0]), float(x[1]) - float(q[1]))
            dist = math.hypot(d[0], d[1])
        else:
            d = (
                float(x[0]) - float(q[0]),
                float(x[1]) - float(q[1]),
                float(x[2]) - float(q[2]),
            )
            dist = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        return d, vq, dist

    def value(self, x: np.ndarray) -> float:
        _, _, dist = self._separation(x)
        return self.sign * (dist - self.radius)

    def terms(self, x: np.ndarray) -> BarrierTerms:
        d, vq, dist = self._separation(x)
        s = self.sign
        h = s * (dist - self.radius)
        safe = dist if dist > _MIN_DIST else _MIN_DIST
        if self._dim == 2:
            g0, g1 = d[0] / safe, d[1] / safe
            a = np.array([s * g0, s * g1, 0.0])
            if self.relative_degree == 1:
                # base: hdot = sign * dhat . (u_xy - vq)
                drift = -s * (g0 * float(vq[0]) + g1 * float(vq[1]))
                return BarrierTerms(h, a, drift)
            # ee: hdot = sign * dhat . v_rel
            # hddot = sign * (|v_rel|^2 - (dhat.v_rel)^2) / d + sign * dhat . u
            vr0 = float(x[3]) - float(vq[0])
            vr1 = float(x[4]) - float(vq[1])
            radial = g0 * vr0 + g1 * vr1
            curvature = vr0 * vr0 + vr1 * vr1 - radial * radial
            return BarrierTerms(h, a, s * curvature / safe, s * radial)
        g0, g1, g2 = d[0] / safe, d[1] / safe, d[2] / safe
        a = np.array([s * g0, s * g1, s * g2])
        vr0 = float(x[3]) - float(vq[0])
        vr1 = float(x[4]) - float(vq[1])
        vr2 = float(x[5]) - float(vq[2])
        radial = g0 * vr0 + g1 * vr1 + g2 * vr2
        curvature = vr0 * vr0 + vr1 * vr1 + vr2 * vr2 - radial * radial
        return BarrierTerms(h, a, s * curvature / safe, s * radial)


class ShapeDistanceBarrier(Barrier):
    """h = signed_distance(p_xy, shape) - margin for a static shape.

    Base subjects get analytic terms from the distance gradient; ee
    subjects use the finite-difference fallback because the distance
    Hessian is piecewise.
    """

    def __init__(self, name: str, subject: tuple[str, str], shape, margin: float = 0.0) -> None:
        kind = subject[1]
        super().__init__(name, subject, 1 if kind == BASE else 2)
        self.shape = shape
        self.margin = float(margin)

    def value(self, x: np.ndarray) -> float:
        from .geometry import Point, signed_distance

        return float(signed_distance(Point(float(x[0]), float(x[1])), self.shape) - self.margin)

    def terms(self, x: np.ndarray) -> BarrierTerms:
        if self.subject[1] == EE:
            return super().terms(x)
        from .geometry import point_shape_distance_gradient

        sd, grad = point_shape_distance_gradient((float(x[0]), float(x[1])), self.shape)
        return BarrierTerms(sd - self.margin, np.array([grad[0], grad[1], 0.0]), 0.0)


class SpeedCapBarrier(Barrier):
    """h = cap(d)^2 - |v|^2 with cap(d) = v_max * min(1, d / d_slow).

    Caps the ee speed at v_max, ramping the cap to zero linearly inside
    ``d_slow`` of a live target (planar distance).  The squared form is
    used because the plain cap - |v| has a gradient cusp at v = 0:
    acceleration perpendicular to a slow v grows |v| while entering the
    linearized row only at second order, so no fixed sampled-data margin
    bounds its inter-tick dips.  With squares the control enters hdot
    exactly linearly (hdot = 2 cap capdot - 2 v . u, degree 1) and the
    zero-order-hold error stays O(|u|^2 dt^2) everywhere.
    """

    def __init__(self, name: str, robot: str, target: TargetFn, v_max: float, d_slow: float) -> None:
        super().__init__(name, (robot, EE), 1)
        if v_max <= 0.0 or d_slow <= 0.0:
            raise ValueError("v_max and d_slow must be positive")
        self.target = target
        self.v_max = float(v_max)
        self.d_slow = float(d_slow)

    def _parts(self, x: np.ndarray):
        q, vq = self.target()
        d = (float(x[0]) - float(q[0]), float(x[1]) - float(q[1]))
        dist = math.hypot(d[0], d[1])
        v = (float(x[3]), float(x[4]), float(x[5]))
        return d, vq, dist, v

    def value(self, x: np.ndarray) -> float:
        _, _, dist, v = self._parts(x)
        cap = self.v_max * min(1.0, dist / self.d_slow)
        return cap * cap - (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])

    def terms(self, x: np.ndarray) -> BarrierTerms:
        d, vq, dist, v = self._parts(x)
        cap = self.v_max * min(1.0, dist / self.d_slow)
        h = cap * cap - (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
        a = np.array([-2.0 * v[0], -2.0 * v[1], -2.0 * v[2]])
        drift = 0.0
        if dist < self.d_slow:
            # cap rate: capdot = v_max / d_slow * ddot, ddot = dhat . v_rel
            safe = dist if dist > _MIN_DIST else _MIN_DIST
            closing = (
                d[0] * (v[0] - float(vq[0])) + d[1] * (v[1] - float(vq[1]))
            ) / safe
            drift = 2.0 * cap * self.v_max * closing / self.d_slow
        return BarrierTerms(h, a, drift)


# ---------------------------------------------------------------------------
# constructors


def _face_barriers(
    robot: str,
    kind: str,
    lower: Sequence[float | None],
    upper: Sequence[float | None],
    make,
    label: str,
) -> list[Barrier]:
    axes = "xyz"
    dim = 2 if kind == BASE else 3
    out: list[Barrier] = []
    for j in range(dim):
        lo = None if lower is None else lower[j]
        hi = None if upper is None else upper[j]
        if lo is not None and hi is not None and lo > hi:
            raise ValueError(f"{label} bounds cross on axis {axes[j]}")
        e = np.zeros(dim)
        e[j] = 1.0
        if lo is not None:
            out.append(make(f"{robot}:{label}:{axes[j]}_min", e.copy(), -float(lo)))
        if hi is not None:
            out.append(make(f"{robot}:{label}:{axes[j]}_max", -e, float(hi)))
    if not out:
        raise ValueError(f"{label} needs at least one finite bound")
    return out


def position_box(
    robot: str,
    lower: Sequence[float | None],
    upper: Sequence[float | None],
    *,
    slice_: str = EE,
) -> list[Barrier]:
    """Per-face barriers keeping the subject position inside a box.

    Base subjects bound (x, y); ee subjects bound (x, y, z).  Use None
    to leave a face open.
    """

    def make(name: str, normal: np.ndarray, offset: float) -> Barrier:
        return HalfspaceBarrier(name, (robot, slice_), normal, offset)

    return _face_barriers(robot, slice_, lower, upper, make, "position_box")


def velocity_box(
    robot: str,
    lower: Sequence[float | None],
    upper: Sequence[float | None],
    *,
    slice_: str = EE,
) -> list[Barrier]:
    """Per-face barriers bounding the end-effector velocity.

    Base twist limits are box bounds on the base control itself, not
    barriers; pass them to :func:`safe_control` instead.
    """
    if slice_ == BASE:
        raise ValueError(
            "base velocity limits are control box bounds, not barriers; "
            "pass them as lower/upper to safe_control"
        )

    def make(name: str, normal: np.ndarray, offset: float) -> Barrier:
        return VelocityFaceBarrier(name, robot, normal, offset)

    return _face_barriers(robot, slice_, lower, upper, make, "velocity_box")


def workspace_polygon(robot: str, polygon, *, slice_: str = BASE, margin: float = 0.0) -> list[Barrier]:
    """Per-edge barriers keeping the subject inside a convex polygon."""
    vertices = polygon.vertices
    out: list[Barrier] = []
    count = len(vertices)
    for i in range(count):
        vx, vy = vertices[i]
        wx, wy = vertices[(i + 1) % count]
        ex, ey = wx - vx, wy - vy
        length = math.hypot(ex, ey)
        inward = np.array([-ey / length, ex / length])
        offset = -float(inward @ (vx, vy)) - margin
        if slice_ == EE:
            normal = np.array([inward[0], inward[1], 0.0])
        else:
            normal = inward
        out.append(HalfspaceBarrier(f"{robot}:workspace:edge{i}", (robot, slice_), normal, offset))
    return out


def keep_out(robot: str, shape, *, margin: float = 0.0, slice_: str = BASE, label: str = "keep_out") -> Barrier:
    """Keep the subject at least ``margin`` outside a static shape."""
    return ShapeDistanceBarrier(f"{robot}:{label}", (robot, slice_), shape, margin)


def separation(robot_a: str, robot_b: str, d_min: float, state_of: Callable[[str], tuple[np.ndarray, np.ndarray]]) -> list[Barrier]:
    """Mutual base-separation barriers for a robot pair.

    Each robot enforces the full constraint against the other's live
    planar position and velocity, so the pair stays safe without a
    central coordinator.  ``state_of(robot_id)`` must report the live
    (position, velocity) of that robot's base.
    """
    if d_min <= 0.0:
        raise ValueError("d_min must be positive")

    def make(subject: str, other: str) -> Barrier:
        return DistanceBarrier(
            f"{subject}:separation:{other}",
            (subject, BASE),
            lambda: state_of(other),
            d_min,
        )

    return [make(robot_a, robot_b), make(robot_b, robot_a)]


def keep_away(robot: str, target: TargetFn, radius: float, *, slice_: str, label: str = "keep_away") -> Barrier:
    """Keep a subject slice at least ``radius`` from a live target.

    The target callable reports planar (position, velocity) each call,
    so both the position and the velocity of a moving person or object
    enter the constraint at the current tick.
    """
    return DistanceBarrier(f"{robot}:{label}", (robot, slice_), target, radius)


def speed_cap_near(robot: str, target: TargetFn, v_max: float, d_slow: float, *, label: str = "speed_cap") -> Barrier:
    """Cap ee speed, ramping to zero as the arm nears a live target."""
    return SpeedCapBarrier(f"{robot}:{label}", robot, target, v_max, d_slow)


def reach_envelope(robot: str, anchor: TargetFn, reach: float) -> Barrier:
    """Keep the ee within ``reach`` of its live base anchor point.

    The anchor callable reports the spatial (position, velocity) of the
    arm mount; during execution that velocity is the base twist chosen
    for the current tick, so the envelope follows the moving base.
    """
    return DistanceBarrier(
        f"{robot}:reach",
        (robot, EE),
        anchor,
        reach,
        sign=-1,
        planar=False,
    )


# ---------------------------------------------------------------------------
# the filter


def linearize(barrier: Barrier, x: np.ndarray, gains: GainSpec) -> ConstraintRow:
    """Turn a barrier at state x into a half-space row on the control."""
    t = barrier.terms(np.asarray(x, dtype=np.float64))
    h = t.h - gains.margin
    if barrier.relative_degree == 1:
        b = t.drift + gains.gamma * h
    else:
        b = t.drift + gains.k0 * h + gains.k1 * t.hdot
    return ConstraintRow(t.a, b, name=barrier.name)


@dataclass
class SafeControlResult:
    """Outcome of one safety-filter solve for one control slice."""

    u: np.ndarray
    status: str                     # "nominal" | "filtered" | "braking"
    qp: QpSolution | None
    rows: list[ConstraintRow] = field(default_factory=list)
    min_h: float = math.inf

    @property
    def infeasible(self) -> bool:
        return self.status == "braking"


def safe_control(
    u_nom: np.ndarray,
    barriers: Sequence[Barrier],
    x: np.ndarray,
    gains: "GainSpec | Callable[[Barrier], GainSpec]",
    *,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    start: np.ndarray | None = None,
    k_brake: float = 10.0,
) -> SafeControlResult:
    """Filter a nominal 3-dim slice control through the barrier QP.

    All barriers must target the same control slice; the caller runs
    one filter per slice.  ``gains`` is either one GainSpec for every
    barrier or a callable mapping each barrier to its GainSpec (so e.g.
    speed caps can carry a larger sampled-data margin).  On an
    infeasible certificate set the result carries the braking control
    instead of a QP solution.
    """
    u_nom = np.asarray(u_nom, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    subjects = {bf.subject for bf in barriers}
    if len(subjects) > 1:
        raise ValueError(f"barriers target multiple slices: {sorted(subjects)}")
    gain_of = gains if callable(gains) else (lambda _bf: gains)

    min_h = math.inf
    rows: list[ConstraintRow] = []
    for bf in barriers:
        t = bf.terms(x)
        if t.h < min_h:
            min_h = t.h
        g = gain_of(bf)
        h = t.h - g.margin
        if bf.relative_degree == 1:
            b = t.drift + g.gamma * h
        else:
            b = t.drift + g.k0 * h + g.k1 * t.hdot
        rows.append(ConstraintRow(t.a, b, name=bf.name))

    sol = solve_qp(QpProblem(u_nom, rows, lower, upper), start=start)
    if sol.status == INFEASIBLE:
        kind = next(iter(subjects))[1] if subjects else (EE if len(x) == 6 else BASE)
        if kind == BASE:
            u = np.zeros(3)
        else:
            u = -k_brake * x[3:]
        if lower is not None or upper is not None:
            lo = -np.inf if lower is None else np.asarray(lower, dtype=np.float64)
            hi = np.inf if upper is None else np.asarray(upper, dtype=np.float64)
            u = np.minimum(np.maximum(u, lo), hi)
        return SafeControlResult(u, "braking", None, rows, min_h)
    status = "filtered" if sol.modified else "nominal"
    return SafeControlResult(sol.u, status, sol, rows, min_h)
