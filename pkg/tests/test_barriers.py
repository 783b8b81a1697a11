"""Unit tests for the barrier layer and the per-slice safety filter."""

import math

import numpy as np
import pytest

from planguard.barriers import (
    BASE,
    EE,
    Barrier,
    DistanceBarrier,
    GainSpec,
    HalfspaceBarrier,
    SafeControlResult,
    ShapeDistanceBarrier,
    SpeedCapBarrier,
    keep_away,
    keep_out,
    linearize,
    pole_placement_gains,
    position_box,
    reach_envelope,
    safe_control,
    separation,
    speed_cap_near,
    velocity_box,
    workspace_polygon,
)
from planguard.geometry import Circle, ConvexPolygon
from planguard.qp import ConstraintRow


def static_target(q, vq=None):
    q = np.asarray(q, dtype=float)
    vq = np.zeros_like(q) if vq is None else np.asarray(vq, dtype=float)
    return lambda: (q, vq)


# ---------------------------------------------------------------------------
# pole placement


def test_pole_placement_frozen_values():
    assert pole_placement_gains((-2.0, -3.0)).tolist() == [6.0, 5.0]
    assert pole_placement_gains((-2.0, -2.0)).tolist() == [4.0, 4.0]
    assert pole_placement_gains((-1.0, -4.0)).tolist() == [4.0, 5.0]


def test_pole_placement_recovers_its_poles():
    rng = np.random.default_rng(7)
    for _ in range(50):
        poles = -rng.uniform(0.1, 8.0, size=2)
        k0, k1 = pole_placement_gains(poles)
        recovered = np.sort(np.roots([1.0, k1, k0]))
        assert np.allclose(recovered, np.sort(poles), atol=1e-10)


def test_pole_placement_rejects_bad_poles():
    with pytest.raises(ValueError):
        pole_placement_gains((-2.0, 0.0))
    with pytest.raises(ValueError):
        pole_placement_gains((1.0, -2.0))
    with pytest.raises(ValueError):
        pole_placement_gains((-1.0, -2.0, -3.0))


def test_gain_spec_defaults_match_default_poles():
    assert GainSpec.from_poles() == GainSpec()
    spec = GainSpec.from_poles((-2.0, -3.0), gamma=1.5)
    assert (spec.gamma, spec.k0, spec.k1) == (1.5, 6.0, 5.0)
    with pytest.raises(ValueError):
        GainSpec(gamma=0.0)


# ---------------------------------------------------------------------------
# hand-derived linearizations


def test_base_halfspace_row_is_exact():
    # keep y >= 0 for the base; at y = 0.5 with gamma = 2 the row is
    # [0, 1, 0] . u + 1.0 >= 0
    (bf,) = position_box("r", (None, 0.0), None, slice_=BASE)
    row = linearize(bf, np.array([0.3, 0.5, 1.0]), GainSpec(gamma=2.0))
    assert row.a.tolist() == [0.0, 1.0, 0.0]
    assert row.b == 1.0
    assert row.name == "r:position_box:y_min"


def test_ee_halfspace_row_is_exact():
    # keep z >= 0.25; state z = 0.5, vz = -0.5; poles (-2, -3) give
    # k = [6, 5] so b = 6 * 0.25 + 5 * (-0.5) = -1.0
    (bf,) = position_box("r", (None, None, 0.25), None)
    x = np.array([0.0, 0.0, 0.5, 0.0, 0.0, -0.5])
    row = linearize(bf, x, GainSpec.from_poles((-2.0, -3.0)))
    assert row.a.tolist() == [0.0, 0.0, 1.0]
    assert row.b == -1.0


def test_base_distance_row_is_exact():
    # robot at (1, 0), target at (3, 0) moving (0.5, 0), d_min = 0.5:
    # h = 1.5, dhat = (-1, 0), drift = -dhat . vq = 0.5, b = 0.5 + 2 * 1.5
    states = {"b": (np.array([3.0, 0.0]), np.array([0.5, 0.0]))}
    bf_a, bf_b = separation("a", "b", 0.5, lambda rid: states[rid])
    assert (bf_a.subject, bf_b.subject) == (("a", BASE), ("b", BASE))
    row = linearize(bf_a, np.array([1.0, 0.0, 0.7]), GainSpec(gamma=2.0))
    assert row.a.tolist() == [-1.0, 0.0, 0.0]
    assert row.b == 3.5


def test_ee_keep_away_row_is_exact():
    # ee at (2, 0, 0.9) with v = (-1, 0, 0.2); person at (0, 0) moving
    # (0, 0.5); R = 1.  Planar: h = 1, hdot = -1, curvature/D = 0.125,
    # so with k = [4, 4]: b = 0.125 + 4 - 4 = 0.125.
    bf = keep_away("r", static_target([0.0, 0.0], [0.0, 0.5]), 1.0, slice_=EE)
    x = np.array([2.0, 0.0, 0.9, -1.0, 0.0, 0.2])
    row = linearize(bf, x, GainSpec())
    assert row.a.tolist() == [1.0, 0.0, 0.0]
    assert row.b == 0.125


def test_reach_envelope_row_matches_hand_derivation():
    # anchor at origin moving (0.5, 0, 0); ee at (0.6, 0, 0.8) so D = 1,
    # v = (0.1, 0, 0): v_rel = (-0.4, 0, 0), radial = -0.24,
    # h = 0.35, hdot = +0.24, drift = -(0.16 - 0.0576) = -0.1024
    bf = reach_envelope("r", static_target([0.0, 0.0, 0.0], [0.5, 0.0, 0.0]), 1.35)
    x = np.array([0.6, 0.0, 0.8, 0.1, 0.0, 0.0])
    t = bf.terms(x)
    assert math.isclose(t.h, 0.35, abs_tol=1e-12)
    assert math.isclose(t.hdot, 0.24, abs_tol=1e-12)
    assert math.isclose(t.drift, -0.1024, abs_tol=1e-12)
    assert np.allclose(t.a, [-0.6, 0.0, -0.8], atol=1e-12)
    row = linearize(bf, x, GainSpec())
    assert math.isclose(row.b, -0.1024 + 4 * 0.35 + 4 * 0.24, abs_tol=1e-12)


def test_speed_cap_rows():
    gains = GainSpec(gamma=2.0)
    bf = speed_cap_near("r", static_target([0.0, 0.0]), 0.5, 1.5)
    # inside the ramp: d = 1 < 1.5, cap = 1/3, h = 1/9 - 1/4 = -5/36;
    # a = -2v; drift = 2 * cap * v_max * (dhat . v_xy) / d_slow
    #         = 2 * (1/3) * 0.5 * 0.5 / 1.5 = 1/9; b = 1/9 - 10/36 = -1/6
    x = np.array([1.0, 0.0, 0.9, 0.5, 0.0, 0.0])
    t = bf.terms(x)
    assert math.isclose(t.h, 1.0 / 9.0 - 0.25, abs_tol=1e-12)
    row = linearize(bf, x, gains)
    assert np.allclose(row.a, [-1.0, 0.0, 0.0])
    assert math.isclose(row.b, -1.0 / 6.0, abs_tol=1e-12)
    # outside the ramp the cap is flat: h = 0.25 - |v|^2, drift = 0
    x_far = np.array([5.0, 0.0, 0.9, 0.0, 0.3, 0.0])
    row_far = linearize(bf, x_far, gains)
    assert np.allclose(row_far.a, [0.0, -0.6, 0.0])
    assert math.isclose(row_far.b, 2.0 * (0.25 - 0.09), abs_tol=1e-12)
    # resting arm: a = -2v vanishes smoothly and h = cap^2 >= 0
    t0 = bf.terms(np.array([1.0, 0.0, 0.9, 0.0, 0.0, 0.0]))
    assert t0.a.tolist() == [0.0, 0.0, 0.0]
    assert t0.h > 0.0


def test_velocity_face_row():
    # vy <= 1.5: h = 1.5 - vy; at vy = 0.4, b = gamma * 1.1
    (bf,) = velocity_box("r", None, (None, 1.5, None))
    row = linearize(bf, np.array([0.0, 0.0, 0.9, 0.0, 0.4, 0.0]), GainSpec(gamma=2.0))
    assert row.a.tolist() == [0.0, -1.0, 0.0]
    assert math.isclose(row.b, 2.2, abs_tol=1e-12)


def test_keep_out_base_terms_use_distance_gradient():
    # rectangle centered (0, 1.2), half-extents (0.25, 0.2); base at
    # (0, 0.6) sees the bottom edge at y = 1.0: sd = 0.4, grad = (0, -1)
    table = ConvexPolygon([(-0.25, 1.0), (0.25, 1.0), (0.25, 1.4), (-0.25, 1.4)])
    bf = keep_out("r", table, margin=0.25)
    t = bf.terms(np.array([0.0, 0.6, 0.0]))
    assert math.isclose(t.h, 0.15, abs_tol=1e-12)
    assert np.allclose(t.a, [0.0, -1.0, 0.0], atol=1e-12)
    assert t.drift == 0.0


# ---------------------------------------------------------------------------
# analytic terms agree with the finite-difference fallback


def fd_terms(bf, x):
    """Barrier.terms resolved on the base class: the FD fallback."""
    return Barrier.terms(bf, np.asarray(x, dtype=float))


def assert_terms_close(analytic, numeric, tol=2e-5):
    assert math.isclose(analytic.h, numeric.h, abs_tol=1e-9)
    assert np.allclose(analytic.a, numeric.a, atol=tol)
    assert math.isclose(analytic.drift, numeric.drift, abs_tol=tol)
    assert math.isclose(analytic.hdot, numeric.hdot, abs_tol=tol)


def random_ee_state(rng, p_lo=0.6, p_hi=2.5):
    p = rng.uniform(p_lo, p_hi, size=3) * rng.choice([-1.0, 1.0], size=3)
    v = rng.uniform(-1.2, 1.2, size=3)
    return np.concatenate([p, v])


def test_analytic_terms_match_finite_differences():
    # the FD fallback cannot see target motion, so all targets rest
    rng = np.random.default_rng(12)
    barriers = [
        HalfspaceBarrier("hs", ("r", EE), np.array([0.3, -0.8, 0.5]), 0.7),
        keep_away("r", static_target([0.1, -0.2]), 0.8, slice_=EE),
        reach_envelope("r", static_target([0.0, 0.0, 0.0]), 4.5),
        speed_cap_near("r", static_target([0.0, 0.0]), 0.5, 1.5),
        (velocity_box("r", (-1.5, None, None), None))[0],
    ]
    for bf in barriers:
        for _ in range(25):
            x = random_ee_state(rng)
            if isinstance(bf, SpeedCapBarrier):
                # stay away from the cap's ramp kink at d = d_slow
                if abs(math.hypot(x[0], x[1]) - bf.d_slow) < 0.05:
                    continue
            assert_terms_close(bf.terms(x), fd_terms(bf, x))


def test_base_analytic_terms_match_finite_differences():
    rng = np.random.default_rng(13)
    shape = Circle((0.2, -0.1), 0.5)
    barriers = [
        keep_out("r", shape, margin=0.3),
        keep_away("r", static_target([3.0, 3.0]), 1.0, slice_=BASE),
        (workspace_polygon("r", ConvexPolygon([(-4, -4), (4, -4), (4, 4), (-4, 4)])))[0],
    ]
    for bf in barriers:
        for _ in range(25):
            x = np.array([rng.uniform(1.0, 2.5), rng.uniform(1.0, 2.5), rng.uniform(-3, 3)])
            assert_terms_close(bf.terms(x), fd_terms(bf, x))


def test_ee_shape_distance_uses_fd_and_matches_point_distance():
    # for a circle the shape barrier must agree with the analytic
    # point-distance barrier of radius r + margin
    circle = Circle((0.5, -0.3), 0.4)
    shape_bf = ShapeDistanceBarrier("s", ("r", EE), circle, margin=0.2)
    dist_bf = keep_away("r", static_target([0.5, -0.3]), 0.6, slice_=EE)
    rng = np.random.default_rng(14)
    for _ in range(25):
        x = random_ee_state(rng, p_lo=1.2, p_hi=2.5)
        assert_terms_close(shape_bf.terms(x), dist_bf.terms(x), tol=5e-5)


# ---------------------------------------------------------------------------
# constructors


def test_position_box_face_counts():
    assert len(position_box("r", (-1, -1, 0), (1, 1, 2))) == 6
    assert len(position_box("r", (-1, -1), (1, 1), slice_=BASE)) == 4
    assert len(position_box("r", (0.0, None, None), None)) == 1
    with pytest.raises(ValueError):
        position_box("r", None, None)
    with pytest.raises(ValueError):
        position_box("r", (1.0, None, None), (0.0, None, None))


def test_velocity_box_rejects_base_subject():
    with pytest.raises(ValueError, match="box bounds"):
        velocity_box("r", (-1, -1), (1, 1), slice_=BASE)


def test_workspace_polygon_edge_values():
    square = ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    edges = workspace_polygon("r", square)
    assert len(edges) == 4
    x = np.array([0.2, 0.5, 0.0])
    values = sorted(bf.value(x) for bf in edges)
    assert np.allclose(values, [0.2, 0.5, 0.5, 0.8])
    shrunk = workspace_polygon("r", square, margin=0.1)
    assert np.allclose(sorted(bf.value(x) for bf in shrunk), [0.1, 0.4, 0.4, 0.7])


def test_keep_away_is_zero_exactly_at_radius():
    bf = keep_away("r", static_target([0.0, 0.0]), 1.0, slice_=EE)
    assert bf.value(np.array([1.0, 0.0, 0.9, 0.0, 0.0, 0.0])) == 0.0
    with pytest.raises(ValueError):
        keep_away("r", static_target([0.0, 0.0]), -1.0, slice_=EE)


def test_base_barriers_must_be_degree_one():
    with pytest.raises(ValueError, match="degree 1"):
        Barrier("bad", ("r", BASE), 2)
    with pytest.raises(ValueError, match="planar"):
        DistanceBarrier("bad", ("r", BASE), static_target([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]), 1.0, planar=False)
    with pytest.raises(ValueError, match="slice"):
        Barrier("bad", ("r", "arm"), 1)


# ---------------------------------------------------------------------------
# the filter


def test_safe_control_passes_nominal_when_safe():
    bfs = position_box("r", (-5, -5, 0), (5, 5, 3))
    x = np.zeros(6)
    x[2] = 1.0
    u_nom = np.array([0.5, -0.2, 0.1])
    res = safe_control(u_nom, bfs, x, GainSpec(), lower=-np.full(3, 4.0), upper=np.full(3, 4.0))
    assert res.status == "nominal"
    assert not res.infeasible
    assert np.array_equal(res.u, u_nom)
    assert res.min_h == 1.0


def test_safe_control_filters_violating_command():
    (bf,) = position_box("r", (None, None, 0.0), None)
    x = np.array([0.0, 0.0, 0.05, 0.0, 0.0, -0.1])
    u_nom = np.array([0.0, 0.0, -4.0])
    res = safe_control(u_nom, [bf], x, GainSpec(), lower=-np.full(3, 4.0), upper=np.full(3, 4.0))
    assert res.status == "filtered"
    row = res.rows[0]
    assert row.a @ res.u + row.b >= -1e-9
    assert res.u[2] > -4.0


def test_safe_control_brakes_on_infeasible_certificates():
    # two half-spaces that are both deeply violated and oppose each other
    a = HalfspaceBarrier("up", ("r", EE), np.array([0.0, 0.0, 1.0]), -10.0)
    b = HalfspaceBarrier("down", ("r", EE), np.array([0.0, 0.0, -1.0]), -10.0)
    x = np.array([0.0, 0.0, 0.0, 0.3, -0.2, 0.6])
    res = safe_control(np.zeros(3), [a, b], x, GainSpec(), lower=-np.full(3, 4.0), upper=np.full(3, 4.0), k_brake=10.0)
    assert res.status == "braking"
    assert res.infeasible and res.qp is None
    assert np.allclose(res.u, np.clip(-10.0 * x[3:], -4.0, 4.0))


def test_safe_control_base_braking_is_zero_twist():
    bf = keep_away("r", static_target([0.0, 0.0]), 2.0, slice_=BASE)
    # start deep inside the forbidden disc: the row is infeasible for
    # any bounded twist once b is sufficiently negative
    x = np.array([0.01, 0.0, 0.0])
    res = safe_control(
        np.array([1.0, 0.0, 0.0]), [bf], x, GainSpec(gamma=2.0),
        lower=np.array([-0.1, -0.1, -0.1]), upper=np.array([0.1, 0.1, 0.1]),
    )
    assert res.status == "braking"
    assert res.u.tolist() == [0.0, 0.0, 0.0]


def test_safe_control_rejects_mixed_slices():
    bfs = [
        keep_away("r", static_target([0.0, 0.0]), 1.0, slice_=BASE),
        keep_away("r", static_target([0.0, 0.0]), 1.0, slice_=EE),
    ]
    with pytest.raises(ValueError, match="multiple slices"):
        safe_control(np.zeros(3), bfs, np.zeros(6), GainSpec())


def test_linearize_matches_safe_control_rows():
    gains = GainSpec.from_poles((-2.0, -3.0))
    bf = keep_away("r", static_target([1.0, 1.0], [0.2, -0.1]), 0.8, slice_=EE)
    x = np.array([2.5, 1.0, 0.9, -0.4, 0.3, 0.0])
    row = linearize(bf, x, gains)
    res = safe_control(np.zeros(3), [bf], x, gains)
    assert np.array_equal(row.a, res.rows[0].a)
    assert row.b == res.rows[0].b
    assert isinstance(row, ConstraintRow)
    assert isinstance(res, SafeControlResult)
