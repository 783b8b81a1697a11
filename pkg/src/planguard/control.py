"""Nominal (pre-filter) controllers for the differential base and the arm point.

These produce the goal-seeking control that the safety filter then
projects onto the constraint set: a proportional world-frame twist for
the base and a critically damped PD acceleration for the end-effector
point.  While the base moves, the arm tracks a carry point above the
base anchor (with base-velocity feedforward) so the reach envelope
stays slack; idle robots station-keep by damping arm velocity.
"""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .world import BaseGoal, EeGoal, GripperGoal, Pose2, RobotState, Subgoal, WaitFor, wrap_angle

__all__ = [
    "base_twist",
    "ee_acceleration",
    "carry_point",
    "carry_acceleration",
    "station_keep",
    "nominal_control",
]

_ZERO3 = np.zeros(3)


def base_twist(robot: RobotState, goal: Pose2, config: RunConfig | None = None) -> np.ndarray:
    """Proportional world-frame twist [vx, vy, omega] toward a base pose.

    Position and heading errors are fed back independently and the
    result is clipped to the per-axis velocity limits.
    """
    cfg = config or RunConfig()
    limit = np.asarray(cfg.base_vel_limit, dtype=np.float64)
    u = np.array([
        cfg.base_kp_pos * (goal.x - robot.base.x),
        cfg.base_kp_pos * (goal.y - robot.base.y),
        cfg.base_kp_ang * wrap_angle(goal.theta - robot.base.theta),
    ])
    return np.clip(u, -limit, limit)


def ee_acceleration(
    robot: RobotState,
    point: np.ndarray,
    config: RunConfig | None = None,
    target_vel: np.ndarray | None = None,
) -> np.ndarray:
    """Critically damped PD acceleration driving the arm point to ``point``.

    ``target_vel`` is a velocity feedforward (defaults to rest).  The
    result is clipped to the per-axis acceleration limit.
    """
    cfg = config or RunConfig()
    v_ref = _ZERO3 if target_vel is None else np.asarray(target_vel, dtype=np.float64)
    a = (cfg.ee_kp * (np.asarray(point, dtype=np.float64) - robot.ee_pos)
         + cfg.ee_kd * (v_ref - robot.ee_vel))
    return np.clip(a, -cfg.ee_acc_limit, cfg.ee_acc_limit)


def carry_point(robot: RobotState, config: RunConfig | None = None) -> np.ndarray:
    """The stowed arm pose while driving: above the base anchor at carry height."""
    cfg = config or RunConfig()
    return np.array([robot.base.x, robot.base.y, cfg.carry_height])


def carry_acceleration(
    robot: RobotState,
    base_cmd: np.ndarray,
    config: RunConfig | None = None,
) -> np.ndarray:
    """Arm acceleration that tracks the carry point as the base moves.

    ``base_cmd`` is the twist the base will actually execute this tick
    (post-filter when available); its linear part feeds forward so the
    arm keeps up with the moving anchor instead of lagging by kp/kd.
    """
    target_vel = np.array([base_cmd[0], base_cmd[1], 0.0])
    return ee_acceleration(robot, carry_point(robot, config), config, target_vel=target_vel)


def station_keep(robot: RobotState, config: RunConfig | None = None) -> np.ndarray:
    """Full idle control: zero base twist, arm velocity damped to rest."""
    cfg = config or RunConfig()
    a = np.clip(-cfg.ee_kd * robot.ee_vel, -cfg.ee_acc_limit, cfg.ee_acc_limit)
    return np.concatenate([_ZERO3, a])


def nominal_control(
    robot: RobotState,
    goal: Subgoal | None,
    config: RunConfig | None = None,
) -> np.ndarray:
    """Full nominal control [vx, vy, omega, ax, ay, az] for one subgoal.

    Base goals drive the base and stow the arm at the carry point; arm
    goals hold the base still and run the arm PD; gripper actions,
    waits, and a ``None`` goal station-keep.
    """
    cfg = config or RunConfig()
    if isinstance(goal, BaseGoal):
        u_base = base_twist(robot, goal.pose, cfg)
        return np.concatenate([u_base, carry_acceleration(robot, u_base, cfg)])
    if isinstance(goal, EeGoal):
        return np.concatenate([_ZERO3, ee_acceleration(robot, goal.point, cfg)])
    if goal is None or isinstance(goal, (GripperGoal, WaitFor)):
        return station_keep(robot, cfg)
    raise TypeError(f"unknown subgoal type: {type(goal).__name__}")
