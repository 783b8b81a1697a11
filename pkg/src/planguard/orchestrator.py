"""Multi-agent orchestration: plan/critique loop, step gating, filtered execution.

The planning loop alternates a task-planner agent (emits canonical plan
lines) with a safety-reviewer agent (emits constraint directives or the
``NO_SAFETY_CONCERNS`` sentinel).  Execution walks the approved plan one
instruction at a time: a per-robot executor agent gates each step with a
YES / "NO: <reason>" verdict, instructions expand into subgoals, and a
control loop drives the simulator with nominal controllers filtered
through the barrier QP.  Failures (vetoed steps, subgoal timeouts)
produce failure feedback and a replan from the current world state.

Everything observable lands in an :class:`ExecutionTrace`: an ordered
event list (dispatches, verdicts, subgoals, safety braking, feedback,
replans, periodic world samples), running safety statistics, a final
status, and backend accounting.  With scripted backends a run is fully
deterministic and serializes to byte-identical JSONL.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import Accounting, AgentBackend
from .barriers import (
    BASE,
    EE,
    Barrier,
    GainSpec,
    SpeedCapBarrier,
    reach_envelope,
    safe_control,
    velocity_box,
)
from .config import RunConfig
from .control import nominal_control
from .geometry import Point, signed_distance
from .plans import (
    ConstraintSpec,
    Instruction,
    ParseError,
    ResolutionError,
    TaskPlan,
    compile_constraint,
    constraint_document,
    expand,
    parse_constraints,
    parse_plan,
    plan_document,
    render,
    render_instruction,
)
from .prompts import NO_SAFETY_CONCERNS, build_prompt
from .world import (
    GRIPPER_CLOSED,
    GRIPPER_OPEN,
    BaseGoal,
    EeGoal,
    GripperGoal,
    ObjectState,
    RobotState,
    Subgoal,
    WaitFor,
    WorldError,
    WorldState,
    scene_document,
    subgoal_achieved,
)

__all__ = [
    "TASK_PLANNER_ROLE", "SAFETY_PLANNER_ROLE", "executor_role",
    "COMPLETED", "FAILED", "ABORTED", "TRACE_SCHEMA_VERSION",
    "STEP_DISPATCHED", "FEASIBILITY_VERDICT", "SUBGOAL_REACHED",
    "SAFETY_INFEASIBLE", "FAILURE_FEEDBACK", "SUCCESS_FEEDBACK",
    "REPLAN", "WORLD_SAMPLE",
    "PlanningFailed", "PlanningSession", "Verdict",
    "TraceEvent", "RunningStats", "ExecutionTrace",
    "capabilities_text", "observations_text", "extract_constraints",
    "plan_loop", "feasibility_check", "parse_verdict", "execute", "run_task",
]

TASK_PLANNER_ROLE = "task_planner"
SAFETY_PLANNER_ROLE = "safety_planner"


def executor_role(robot_id: str) -> str:
    """Backend role key for one robot's execution agent."""
    return f"executor:{robot_id}"


# final trace statuses
COMPLETED = "Completed"
FAILED = "Failed"
ABORTED = "Aborted"

# event kinds
STEP_DISPATCHED = "StepDispatched"
FEASIBILITY_VERDICT = "FeasibilityVerdict"
SUBGOAL_REACHED = "SubgoalReached"
SAFETY_INFEASIBLE = "SafetyInfeasible"
FAILURE_FEEDBACK = "FailureFeedback"
SUCCESS_FEEDBACK = "SuccessFeedback"
REPLAN = "Replan"
WORLD_SAMPLE = "WorldSample"

TRACE_SCHEMA_VERSION = 1


class PlanningFailed(RuntimeError):
    """The planning loop never produced a parseable plan."""

    def __init__(self, task: str, critique_log: list[tuple[int, str]]) -> None:
        super().__init__(
            f"no parseable plan for task {task!r} within "
            f"{len(critique_log)} rounds"
        )
        self.task = task
        self.critique_log = list(critique_log)


@dataclass
class PlanningSession:
    """Outcome of one plan/critique loop."""

    task: str
    rounds: int
    plan: TaskPlan
    constraints: list[ConstraintSpec]
    critique_log: list[tuple[int, str]]     # (round number, reviewer feedback)
    approved: bool                          # reviewer emitted the sentinel

    def __post_init__(self) -> None:
        if self.rounds != len(self.critique_log):
            raise ValueError("rounds must equal the number of logged critiques")


@dataclass(frozen=True)
class Verdict:
    """Parsed executor reply for one instruction."""

    executable: bool
    reason: str = ""


# ----------------------------------------------------------------- context ---


def capabilities_text(world: WorldState) -> str:
    """One line per robot: its id and capability list."""
    return "\n".join(
        f"{rid}: {', '.join(world.robots[rid].capabilities)}"
        for rid in sorted(world.robots)
    )


def _fmt_xy(x: float, y: float) -> str:
    return f"({x:.2f}, {y:.2f})"


def observations_text(
    world: WorldState,
    *,
    center: tuple[float, float] | None = None,
    radius: float | None = None,
    exclude: str | None = None,
) -> str:
    """Deterministic entity listing, optionally limited to a planar radius.

    With ``center``/``radius`` set this is a robot's local view: entities
    farther than ``radius`` from ``center`` are omitted and each line
    gains the distance.  ``exclude`` drops the observing robot itself.
    """
    lines: list[str] = []

    def emit(eid: str, xy: tuple[float, float], text: str) -> None:
        if center is not None and radius is not None:
            d = math.hypot(xy[0] - center[0], xy[1] - center[1])
            if d > radius:
                return
            lines.append(f"{text}, {d:.2f} m away")
        else:
            lines.append(text)

    for rid in sorted(world.robots):
        if rid == exclude:
            continue
        r = world.robots[rid]
        held = f", holding {r.held}" if r.held else ""
        emit(rid, (r.base.x, r.base.y),
             f"{rid} (robot) at {_fmt_xy(r.base.x, r.base.y)}, gripper {r.gripper}{held}")
    for oid in sorted(world.objects):
        o = world.objects[oid]
        tag = "graspable object" if o.graspable else "object"
        emit(oid, (o.pose.x, o.pose.y),
             f"{oid} ({tag}) at {_fmt_xy(o.pose.x, o.pose.y)}, height {o.height:.2f} m")
    for hid in sorted(world.humans):
        h = world.humans[hid]
        access = h.access.replace("_", "-")
        emit(hid, (float(h.position[0]), float(h.position[1])),
             f"{hid} (person, {access} access) at "
             f"{_fmt_xy(float(h.position[0]), float(h.position[1]))}")
    for sid in sorted(world.statics):
        s = world.statics[sid]
        c = world.entity_xy(sid)
        emit(sid, (float(c[0]), float(c[1])),
             f"{sid} ({s.kind}) centered at {_fmt_xy(float(c[0]), float(c[1]))}")
    if not lines:
        return "nothing within view"
    return "\n".join(lines)


def extract_constraints(text: str) -> list[ConstraintSpec]:
    """Collect constraint directives from free-form reviewer feedback.

    Lines that do not parse as constraint directives (prose, added plan
    lines) are skipped; duplicates are dropped preserving first-seen
    order.
    """
    found: dict[ConstraintSpec, None] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            for spec in parse_constraints(line):
                found.setdefault(spec)
        except ParseError:
            continue
    return list(found)


# ------------------------------------------------------------ planning loop ---


def plan_loop(
    task: str,
    world: WorldState,
    backend: AgentBackend,
    config: RunConfig | None = None,
    *,
    failure: str | None = None,
    previous: TaskPlan | None = None,
) -> tuple[TaskPlan, list[ConstraintSpec], PlanningSession]:
    """Run the plan/critique loop until approval or the round cap.

    Round r: the current plan is reviewed; the sentinel
    ``NO_SAFETY_CONCERNS`` ends the loop, otherwise the critique (with
    any constraint directives) is fed back for a revision.  A plan the
    parser rejects consumes a round too: the parse error is the
    critique.  When ``previous``/``failure`` are given (a replan after
    an execution failure) the first planner call is a revision prompt
    carrying that feedback.

    Returns the last parseable plan, the union of constraint directives
    across all critiques, and the session record.  Raises
    :class:`PlanningFailed` if no round yields a parseable plan.
    """
    cfg = config or RunConfig()
    base_ctx = {
        "task": task,
        "capabilities": capabilities_text(world),
        "observations": observations_text(world),
    }
    if previous is not None:
        ctx = dict(
            base_ctx,
            plan=render(previous),
            critique="(revision requested after an execution failure; "
                     "see the failure feedback below)",
            failure=failure or "execution failed",
        )
        reply = backend.complete(TASK_PLANNER_ROLE,
                                 build_prompt("task_planner_revision", ctx))
    else:
        reply = backend.complete(TASK_PLANNER_ROLE,
                                 build_prompt("task_planner", base_ctx))

    plan: TaskPlan | None = None
    constraints: dict[ConstraintSpec, None] = {}
    log: list[tuple[int, str]] = []
    approved = False

    for round_no in range(1, cfg.max_rounds + 1):
        try:
            candidate = parse_plan(reply, task=task)
        except ParseError as e:
            critique = f"plan rejected by parser: {e}"
            log.append((round_no, critique))
            if round_no == cfg.max_rounds:
                break
            ctx = dict(base_ctx,
                       plan=reply.strip() or "(empty reply)", critique=critique)
            reply = backend.complete(TASK_PLANNER_ROLE,
                                     build_prompt("task_planner_revision", ctx))
            continue

        plan = candidate
        plan_text = render(plan)
        critique = backend.complete(
            SAFETY_PLANNER_ROLE,
            build_prompt("safety_planner",
                         {"task": task, "plan": plan_text,
                          "observations": base_ctx["observations"]}),
        )
        log.append((round_no, critique))
        if critique.strip() == NO_SAFETY_CONCERNS:
            approved = True
            break
        for spec in extract_constraints(critique):
            constraints.setdefault(spec)
        if round_no == cfg.max_rounds:
            break
        ctx = dict(base_ctx, plan=plan_text, critique=critique)
        reply = backend.complete(TASK_PLANNER_ROLE,
                                 build_prompt("task_planner_revision", ctx))

    if plan is None:
        raise PlanningFailed(task, log)
    session = PlanningSession(task=task, rounds=len(log), plan=plan,
                              constraints=list(constraints),
                              critique_log=log, approved=approved)
    return plan, session.constraints, session


# -------------------------------------------------------- feasibility gating ---

_RE_YES = re.compile(r"^\s*yes\s*[.!]?\s*$", re.IGNORECASE)
_RE_NO = re.compile(r"^\s*no\b[\s:,.\-]*(?P<reason>.*)$", re.IGNORECASE | re.DOTALL)


def parse_verdict(reply: str) -> Verdict:
    """Parse an executor reply; anything off-format is a NO."""
    if _RE_YES.match(reply):
        return Verdict(True)
    m = _RE_NO.match(reply)
    if m:
        return Verdict(False, m.group("reason").strip() or "unspecified")
    return Verdict(False, "unparseable verdict")


def feasibility_check(
    robot_id: str,
    ins: Instruction,
    world: WorldState,
    backend: AgentBackend,
    config: RunConfig | None = None,
) -> Verdict:
    """Ask the robot's execution agent whether an instruction is executable.

    The agent sees the instruction verbatim, the robot's capability
    list, and the robot's local observations (entities within the
    observation radius).
    """
    cfg = config or RunConfig()
    robot = world.robots[robot_id]
    ctx = {
        "robot": ins.robot,
        "capabilities": ", ".join(robot.capabilities),
        "instruction": ins.raw or render_instruction(ins),
        "observations": observations_text(
            world,
            center=(robot.base.x, robot.base.y),
            radius=cfg.observation_radius,
            exclude=robot_id,
        ),
    }
    return parse_verdict(backend.complete(executor_role(robot_id),
                                          build_prompt("executor", ctx)))


# ------------------------------------------------------------------- traces ---


@dataclass
class TraceEvent:
    """One timestamped record in an execution trace (sim time only)."""

    kind: str
    t: float
    data: dict = field(default_factory=dict)

    def document(self) -> dict:
        return {"record": "event", "kind": self.kind,
                "t": round(self.t, 9), "data": self.data}


def _round_floats(value, digits: int = 9):
    if isinstance(value, float):
        return round(value, digits)
    if isinstance(value, dict):
        return {k: _round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(v, digits) for v in value]
    return value


class RunningStats:
    """Per-tick safety statistics over a run.

    Distances follow the same convention as the barriers: per human the
    minimum over robots of the planar base-center and end-effector
    distances; robot separation is base center to center; obstacle
    clearance is base-center signed distance minus the body radius
    against static obstacles and non-graspable object footprints;
    workspace excursion is how far the base body pokes past a region
    boundary (negative while inside).  Each minimum keeps the sim time
    at which it occurred, so judges can cite evidence.
    """

    def __init__(self, world: WorldState, config: RunConfig) -> None:
        self.cfg = config
        self.human_access = {hid: h.access for hid, h in world.humans.items()}
        self.min_human_distance: dict[str, tuple[float, float]] = {
            hid: (math.inf, 0.0) for hid in world.humans
        }
        self.min_robot_separation: tuple[float, float] | None = (
            (math.inf, 0.0) if len(world.robots) > 1 else None
        )
        self._obstacles = [
            (oid, o.world_shape())
            for oid, o in sorted(world.objects.items()) if not o.graspable
        ] + [
            (sid, s.shape)
            for sid, s in sorted(world.statics.items()) if s.kind == "obstacle"
        ]
        self.min_obstacle_clearance: dict[str, tuple[float, float]] = {
            oid: (math.inf, 0.0) for oid, _ in self._obstacles
        }
        self._regions = [
            (sid, s.shape)
            for sid, s in sorted(world.statics.items()) if s.kind == "region"
        ]
        self.max_workspace_excursion: dict[str, tuple[float, float]] = {
            sid: (-math.inf, 0.0) for sid, _ in self._regions
        }
        self.max_speed_near_technical: dict[str, tuple[float, float]] = {
            hid: (0.0, 0.0) for hid, a in self.human_access.items()
            if a == "technical"
        }
        self._locations = [(oid, shape) for oid, shape in self._obstacles]
        self.co_occupancy: dict[str, dict] = {}
        self.ticks = 0

    def update(self, world: WorldState) -> None:
        t = world.time
        self.ticks += 1
        robots = [world.robots[rid] for rid in sorted(world.robots)]
        points = [
            (r, Point(r.base.x, r.base.y),
             (float(r.ee_pos[0]), float(r.ee_pos[1])))
            for r in robots
        ]

        for hid, (best, _) in list(self.min_human_distance.items()):
            h = world.humans[hid]
            hx, hy = float(h.position[0]), float(h.position[1])
            d = min(
                min(math.hypot(p.x - hx, p.y - hy),
                    math.hypot(ee[0] - hx, ee[1] - hy))
                for _, p, ee in points
            )
            if d < best:
                self.min_human_distance[hid] = (d, t)

        if self.min_robot_separation is not None:
            best, _ = self.min_robot_separation
            for i in range(len(points)):
                for j in range(i + 1, len(points)):
                    d = math.hypot(points[i][1].x - points[j][1].x,
                                   points[i][1].y - points[j][1].y)
                    if d < best:
                        best = d
                        self.min_robot_separation = (d, t)

        for oid, shape in self._obstacles:
            best, _ = self.min_obstacle_clearance[oid]
            for r, p, _ in points:
                c = signed_distance(p, shape) - r.radius
                if c < best:
                    best = c
                    self.min_obstacle_clearance[oid] = (c, t)

        for sid, shape in self._regions:
            worst, _ = self.max_workspace_excursion[sid]
            for r, p, _ in points:
                e = signed_distance(p, shape) + r.radius
                if e > worst:
                    worst = e
                    self.max_workspace_excursion[sid] = (e, t)

        for hid, (best, _) in list(self.max_speed_near_technical.items()):
            h = world.humans[hid]
            hx, hy = float(h.position[0]), float(h.position[1])
            for r, _, ee in points:
                if math.hypot(ee[0] - hx, ee[1] - hy) <= self.cfg.slow_d_slow:
                    speed = float(np.linalg.norm(r.ee_vel))
                    if speed > best:
                        best = speed
                        self.max_speed_near_technical[hid] = (speed, t)

        for lid, shape in self._locations:
            if lid in self.co_occupancy:
                continue
            inside = [r.id for r, p, _ in points
                      if signed_distance(p, shape) <= self.cfg.location_radius]
            if len(inside) > 1:
                self.co_occupancy[lid] = {"t": round(t, 9), "robots": inside}

    @staticmethod
    def _pairs(d: dict[str, tuple[float, float]]) -> dict:
        return {
            k: {"value": _finite(v), "t": round(tt, 9)}
            for k, (v, tt) in sorted(d.items())
        }

    def document(self) -> dict:
        doc = {
            "ticks": self.ticks,
            "min_human_distance": self._pairs(self.min_human_distance),
            "human_access": dict(sorted(self.human_access.items())),
            "min_obstacle_clearance": self._pairs(self.min_obstacle_clearance),
            "max_workspace_excursion": self._pairs(self.max_workspace_excursion),
            "max_speed_near_technical": self._pairs(self.max_speed_near_technical),
            "co_occupancy": dict(sorted(self.co_occupancy.items())),
        }
        if self.min_robot_separation is not None:
            v, tt = self.min_robot_separation
            doc["min_robot_separation"] = {"value": _finite(v), "t": round(tt, 9)}
        return _round_floats(doc)


def _finite(v: float) -> float | None:
    return None if math.isinf(v) else v


@dataclass
class ExecutionTrace:
    """Everything observable about one plan execution."""

    header: dict
    events: list[TraceEvent]
    status: str
    accounting: Accounting
    stats: dict
    steps_executed: int = 0
    replans: int = 0

    def footer(self) -> dict:
        return {
            "record": "footer",
            "status": self.status,
            "accounting": self.accounting.document(),
            "stats": self.stats,
            "steps_executed": self.steps_executed,
            "replans": self.replans,
        }

    def lines(self) -> list[str]:
        docs = [dict(self.header, record="header", schema=TRACE_SCHEMA_VERSION)]
        docs.extend(e.document() for e in self.events)
        docs.append(self.footer())
        return [json.dumps(d, sort_keys=True) for d in docs]

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "ExecutionTrace":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        docs = [json.loads(line) for line in lines if line.strip()]
        if len(docs) < 2 or docs[0].get("record") != "header" \
                or docs[-1].get("record") != "footer":
            raise ValueError(f"{path} is not a complete trace (header...footer)")
        header = {k: v for k, v in docs[0].items() if k != "record"}
        if header.pop("schema", None) != TRACE_SCHEMA_VERSION:
            raise ValueError(f"{path} has an unsupported trace schema")
        events = []
        for d in docs[1:-1]:
            if d.get("record") != "event":
                raise ValueError(f"unexpected record {d.get('record')!r} in {path}")
            events.append(TraceEvent(d["kind"], float(d["t"]), d.get("data", {})))
        foot = docs[-1]
        acc = foot.get("accounting", {})
        return cls(
            header=header,
            events=events,
            status=foot["status"],
            accounting=Accounting(
                calls=int(acc.get("calls", 0)),
                latency=float(acc.get("latency", 0.0)),
                tokens_in=int(acc.get("tokens_in", 0)),
                tokens_out=int(acc.get("tokens_out", 0)),
                cost=float(acc.get("cost", 0.0)),
            ),
            stats=foot.get("stats", {}),
            steps_executed=int(foot.get("steps_executed", 0)),
            replans=int(foot.get("replans", 0)),
        )

    def events_of(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]


# -------------------------------------------------------------- execution ---


def _instruction_doc(ins: Instruction) -> dict:
    doc = {"index": ins.index, "robot": ins.robot, "verb": ins.verb,
           "target": ins.target, "raw": ins.raw or render_instruction(ins)}
    if ins.dest is not None:
        doc["dest"] = ins.dest
    return doc


def _subgoal_doc(goal: Subgoal) -> dict:
    if isinstance(goal, BaseGoal):
        return {"type": "base", "pose": _round_floats(
            [goal.pose.x, goal.pose.y, goal.pose.theta])}
    if isinstance(goal, EeGoal):
        return {"type": "ee", "point": _round_floats(list(map(float, goal.point)))}
    if isinstance(goal, GripperGoal):
        return {"type": "gripper", "state": goal.state, "obj": goal.obj}
    if isinstance(goal, WaitFor):
        return {"type": "wait", "condition": goal.condition.text()}
    raise TypeError(f"unknown subgoal type: {type(goal).__name__}")


class _Filter:
    """Per-run safety filtering state: compiled barriers plus envelopes."""

    def __init__(self, world: WorldState, specs: Sequence[ConstraintSpec],
                 cfg: RunConfig) -> None:
        self.cfg = cfg
        self.compiled: list[tuple[ConstraintSpec, Barrier]] = [
            (spec, b) for spec in specs for b in compile_constraint(spec, world, cfg)
        ]
        self._anchors: dict[str, dict[str, np.ndarray]] = {}
        self._envelopes: dict[str, list[Barrier]] = {}
        for rid, r in world.robots.items():
            holder = {"pos": np.array([r.base.x, r.base.y, 0.0]),
                      "vel": np.zeros(3)}
            self._anchors[rid] = holder
            v = cfg.ee_vel_limit
            self._envelopes[rid] = [
                reach_envelope(rid, lambda h=holder: (h["pos"], h["vel"]), r.reach),
                *velocity_box(rid, (-v, -v, -v), (v, v, v)),
            ]
        default = GainSpec.from_poles(cfg.poles, gamma=cfg.gamma,
                                      margin=cfg.discrete_margin)
        speedy = GainSpec.from_poles(cfg.poles, gamma=cfg.gamma,
                                     margin=cfg.speed_cap_margin)
        self.gains = lambda bf: speedy if isinstance(bf, SpeedCapBarrier) else default
        self._scoped: dict[str, list[Barrier]] = {}
        self.set_step(0)

    def set_step(self, step: int) -> None:
        """Select the barriers whose scope covers the given plan step."""
        by_subject: dict[tuple[str, str], list[Barrier]] = {}
        for spec, b in self.compiled:
            lo, hi = spec.scope or (None, None)
            if lo is not None and not (lo <= step <= hi):
                continue
            by_subject.setdefault(b.subject, []).append(b)
        self._scoped = by_subject

    def base_barriers(self, rid: str) -> list[Barrier]:
        return self._scoped.get((rid, BASE), [])

    def ee_barriers(self, rid: str) -> list[Barrier]:
        return self._scoped.get((rid, EE), []) + self._envelopes[rid]

    def set_anchor(self, rid: str, robot: RobotState, base_u: np.ndarray) -> None:
        holder = self._anchors[rid]
        holder["pos"] = np.array([robot.base.x, robot.base.y, 0.0])
        holder["vel"] = np.array([base_u[0], base_u[1], 0.0])


def execute(
    plan: TaskPlan,
    constraints: Sequence[ConstraintSpec],
    world: WorldState,
    backend: AgentBackend,
    config: RunConfig | None = None,
) -> ExecutionTrace:
    """Execute a plan step by step under the safety filter.

    Per instruction: wait for its precondition, get the robot agent's
    feasibility verdict, expand into subgoals, and drive each subgoal
    with filtered controls until reached or timed out.  A vetoed step,
    an unresolvable instruction, or a subgoal timeout produces failure
    feedback and a replan from the current world state (the new plan
    restarts at its own step 0); the replan budget caps recovery.  The
    trace records every event with simulated timestamps only, so
    scripted runs serialize byte-identically.
    """
    cfg = config or RunConfig()
    task = plan.task
    events: list[TraceEvent] = []
    stats = RunningStats(world, cfg)

    header = {
        "task": task,
        "plan": plan_document(plan),
        "constraints": [constraint_document(s) for s in constraints],
        "scene": _round_floats(scene_document(world)),
        "safety_enabled": cfg.safety_enabled,
        "dt": cfg.dt,
        "seed": cfg.seed,
    }

    specs: dict[ConstraintSpec, None] = dict.fromkeys(constraints)
    filt = _Filter(world, list(specs), cfg)
    base_lim = np.asarray(cfg.base_vel_limit, dtype=np.float64)
    acc_lim = np.full(3, cfg.ee_acc_limit)
    braking: dict[str, bool] = {rid: False for rid in world.robots}

    samples_emitted = 0

    def sample_due() -> bool:
        return world.time + 1e-9 >= samples_emitted * cfg.sample_period

    def emit_sample() -> None:
        nonlocal samples_emitted
        events.append(TraceEvent(WORLD_SAMPLE, world.time,
                                 {"snapshot": world.snapshot()}))
        samples_emitted += 1

    emit_sample()

    def tick(active_rid: str | None, goal: Subgoal | None) -> None:
        controls: dict[str, np.ndarray] = {}
        for rid, robot in world.robots.items():
            u6 = nominal_control(robot, goal if rid == active_rid else None, cfg)
            if cfg.safety_enabled:
                x_base = np.array([robot.base.x, robot.base.y, robot.base.theta])
                res_b = safe_control(u6[:3], filt.base_barriers(rid), x_base,
                                     filt.gains, lower=-base_lim, upper=base_lim,
                                     k_brake=cfg.k_brake)
                filt.set_anchor(rid, robot, res_b.u)
                x_ee = np.concatenate([robot.ee_pos, robot.ee_vel])
                res_e = safe_control(u6[3:], filt.ee_barriers(rid), x_ee,
                                     filt.gains, lower=-acc_lim, upper=acc_lim,
                                     k_brake=cfg.k_brake)
                u6 = np.concatenate([res_b.u, res_e.u])
                now_braking = res_b.infeasible or res_e.infeasible
                if now_braking and not braking[rid]:
                    which = BASE if res_b.infeasible else EE
                    res = res_b if res_b.infeasible else res_e
                    events.append(TraceEvent(SAFETY_INFEASIBLE, world.time, {
                        "robot": rid, "slice": which,
                        "min_h": round(res.min_h, 9),
                    }))
                braking[rid] = now_braking
            controls[rid] = u6
        world.step(controls, cfg.dt)
        stats.update(world)
        if sample_due():
            emit_sample()

    def drive(rid: str, goal: Subgoal) -> bool:
        """Run the control loop for one subgoal; False on timeout."""
        deadline = world.time + cfg.subgoal_timeout
        while True:
            if isinstance(goal, GripperGoal):
                _actuate_gripper(world, rid, goal, cfg)
            if subgoal_achieved(world, rid, goal, cfg.tol,
                                safe_radius=cfg.safe_position_radius,
                                grasp_range=cfg.grasp_range):
                return True
            if world.time >= deadline - 1e-9:
                return False
            tick(rid, goal)

    instructions: list[Instruction] = list(plan.instructions)
    preconditions = dict(plan.preconditions)
    current_plan = plan
    plan_gen = 0
    replans = 0
    steps_executed = 0
    dispatch = 0
    status: str | None = None
    i = 0

    def fail_step(step: int, reason: str) -> bool:
        """Record failure feedback; True if a replan took over."""
        nonlocal instructions, preconditions, current_plan, plan_gen
        nonlocal replans, i, status, filt, specs
        events.append(TraceEvent(FAILURE_FEEDBACK, world.time,
                                 {"step": step, "reason": reason}))
        if replans >= cfg.replan_cap:
            status = FAILED
            return False
        replans += 1
        try:
            new_plan, new_specs, session = plan_loop(
                task, world, backend, cfg,
                failure=f"step {step} ({instructions[step].raw or render_instruction(instructions[step])}): {reason}",
                previous=current_plan,
            )
        except PlanningFailed:
            status = FAILED
            return False
        for spec in new_specs:
            specs.setdefault(spec)
        filt = _Filter(world, list(specs), cfg)
        current_plan = new_plan
        instructions = list(new_plan.instructions)
        preconditions = dict(new_plan.preconditions)
        plan_gen += 1
        i = 0
        events.append(TraceEvent(REPLAN, world.time, {
            "plan_gen": plan_gen,
            "rounds": session.rounds,
            "replans_used": replans,
            "plan": plan_document(new_plan),
        }))
        return True

    try:
        while i < len(instructions):
            ins = instructions[i]
            filt.set_step(i)
            events.append(TraceEvent(STEP_DISPATCHED, world.time, {
                "dispatch": dispatch, "plan_gen": plan_gen, "step": i,
                "instruction": _instruction_doc(ins),
            }))
            dispatch += 1

            robot_entity = world.find(ins.robot)
            if not isinstance(robot_entity, RobotState):
                if fail_step(i, f"instruction references unknown robot {ins.robot!r}"):
                    continue
                break
            rid = robot_entity.id

            cond = preconditions.get(i)
            if cond is not None and not drive(rid, WaitFor(cond)):
                if fail_step(i, f"precondition never held: {cond.text()}"):
                    continue
                break

            verdict = feasibility_check(rid, ins, world, backend, cfg)
            events.append(TraceEvent(FEASIBILITY_VERDICT, world.time, {
                "step": i, "robot": rid,
                "executable": verdict.executable, "reason": verdict.reason,
            }))
            if not verdict.executable:
                if fail_step(i, f"execution agent vetoed the step: {verdict.reason}"):
                    continue
                break

            try:
                subgoals = expand(ins, world, cfg)
            except ResolutionError as e:
                if fail_step(i, str(e)):
                    continue
                break

            timed_out = False
            for goal in subgoals:
                if drive(rid, goal):
                    events.append(TraceEvent(SUBGOAL_REACHED, world.time, {
                        "step": i, "robot": rid, "subgoal": _subgoal_doc(goal),
                    }))
                else:
                    timed_out = True
                    fail_step(i, f"subgoal timed out after {cfg.subgoal_timeout:g} "
                                 f"sim-seconds: {_subgoal_doc(goal)}")
                    break
            if timed_out:
                if status is not None:
                    break       # replan budget exhausted inside fail_step
                continue        # replanned: restart at the new plan's step 0

            events.append(TraceEvent(SUCCESS_FEEDBACK, world.time, {"step": i}))
            steps_executed += 1
            i += 1
        if status is None:
            status = COMPLETED
    except WorldError as e:
        events.append(TraceEvent(FAILURE_FEEDBACK, world.time,
                                 {"step": i, "reason": f"world error: {e}"}))
        status = ABORTED

    if not events or events[-1].kind != WORLD_SAMPLE:
        events.append(TraceEvent(WORLD_SAMPLE, world.time,
                                 {"snapshot": world.snapshot()}))

    return ExecutionTrace(
        header=header,
        events=events,
        status=status,
        accounting=backend.accounting(),
        stats=stats.document(),
        steps_executed=steps_executed,
        replans=replans,
    )


def _actuate_gripper(world: WorldState, rid: str, goal: GripperGoal,
                     cfg: RunConfig) -> None:
    """Instant gripper actuation, gated by grasp range for closing."""
    r = world.robots[rid]
    if goal.state == GRIPPER_OPEN:
        r.gripper = GRIPPER_OPEN
        r.held = None
        return
    if r.held is not None:
        return  # cannot close on a new object while holding one
    obj = world.find(goal.obj) if goal.obj else None
    if not isinstance(obj, ObjectState) or not obj.graspable:
        return
    gp = obj.grasp_point_world()
    if float(np.linalg.norm(r.ee_pos - gp)) <= cfg.grasp_range:
        r.gripper = GRIPPER_CLOSED
        r.held = obj.id


def run_task(
    task: str,
    world: WorldState,
    backend: AgentBackend,
    config: RunConfig | None = None,
) -> tuple[ExecutionTrace, PlanningSession]:
    """Plan (with critique loop) and execute one task end to end."""
    cfg = config or RunConfig()
    plan, constraints, session = plan_loop(task, world, backend, cfg)
    trace = execute(plan, constraints, world, backend, cfg)
    return trace, session
