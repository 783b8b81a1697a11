"""Run-wide tunables: tolerances, filter gains, controller limits, loop caps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Tolerances:
    """Completion tolerances for subgoal checks."""

    pos: float = 0.02   # m
    ang: float = 0.05   # rad
    vel: float = 0.05   # m/s


@dataclass
class RunConfig:
    """Everything a run needs besides the scene, the task, and the backends."""

    dt: float = 0.01                      # integrator step, s
    tol: Tolerances = field(default_factory=Tolerances)

    # safety filter
    gamma: float = 2.0                    # class-K slope for degree-1 barriers
    poles: tuple[float, float] = (-2.0, -2.0)  # closed-loop poles for degree-2 barriers
    discrete_margin: float = 0.01         # enforced floor on h, absorbs zero-order-hold error
    speed_cap_margin: float = 0.025       # floor for the squared speed cap (higher curvature)
    k_brake: float = 10.0                 # braking fallback gain, 1/s
    keep_out_margin: float = 0.05         # m, added around no-collide footprints
    keep_away_radius: dict = field(
        default_factory=lambda: {"non_technical": 1.0, "technical": 0.3}
    )
    keep_away_entity_radius: float = 0.5  # m, stay-away radius for non-human targets
    separation_min: float = 0.5           # m, robot-robot distance floor
    slow_v_max: float = 0.5               # m/s, cap far from technical personnel
    slow_d_slow: float = 1.5              # m, distance at which the cap starts easing

    # actuation boxes
    base_vel_limit: tuple[float, float, float] = (1.0, 1.0, 1.5)  # |vx|, |vy|, |omega|
    ee_acc_limit: float = 4.0             # m/s^2 per axis
    ee_vel_limit: float = 1.5             # m/s per axis (velocity_box barriers)

    # nominal controllers
    base_kp_pos: float = 1.5
    base_kp_ang: float = 2.0
    ee_kp: float = 8.0
    carry_height: float = 0.9             # m, end-effector rest height above the base

    # plan expansion
    standoff: float = 0.6                 # m, base goal distance from a target's center
    align_height: float = 0.10            # m, hover above the grasp point
    lift_height: float = 0.10             # m, raise after closing the gripper
    place_clearance: float = 0.05         # m, drop height above a support surface
    grasp_range: float = 0.03             # m, gripper must be this close to grasp
    safe_position_radius: float = 0.3     # m, "at safe position" condition radius

    # orchestration
    max_rounds: int = 3
    replan_cap: int = 2
    subgoal_timeout: float = 30.0         # simulated seconds per subgoal
    observation_radius: float = 3.0       # m, executor agents see entities this close
    sample_period: float = 0.2            # s, WorldSample cadence in traces
    safety_enabled: bool = True

    # judging
    judge_distance_slack: float = 0.02    # m, below-radius slack before flagging
    location_radius: float = 0.45         # m, shared-location occupancy radius

    seed: int = 0

    @property
    def ee_kd(self) -> float:
        # critical damping for the end-effector point controller
        return 2.0 * math.sqrt(self.ee_kp)
