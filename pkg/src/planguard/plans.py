"""Plan and constraint language: parsing, rendering, expansion, compilation.

Planner agents emit plans and safety directives as text.  This module owns
that text interface: a closed grammar parsed into typed instructions and
constraint specifications, instruction expansion into controller subgoals,
and constraint compilation into barrier functions bound to a live scene.

Grammar
-------
Plan lines are matched case-insensitively, one instruction per non-blank
line; a comma-separated sequence on a single line is treated as consecutive
instructions, and optional ``N.`` / ``Step N:`` numbering prefixes are
ignored::

    Move <robot> to <place>        (equivalently:  <robot> move to <place>)
    <robot> pick [the] <object>
    <robot> place <object> in|on <entity>
    <robot> release <object>
    <robot> move <object> to <place>
    <robot> wait for <condition>
    <robot> check <condition>

Any line may end with ``when <condition>``, recording a precondition for
that step.  Conditions::

    <robot> at safe position
    <robot> holding <object>

Constraint lines::

    <robot> [manipulator] must not collide with <entity>
    <robot> [manipulator] must stay away from <target> [by at least <r> m]
    <robot> [manipulator] must slow down near <target> [below <v> m/s] [within <d> m]
    <robot> must stay inside <region>

each optionally scoped with ``during steps <i>-<j>`` (instruction indices,
inclusive; constraints are global when no scope is given).  ``<target>``
may be a named entity or the collective ``users`` / ``humans``, matching
every person in the scene.  The ``manipulator`` (or ``arm`` /
``end effector``) selector binds the constraint to the end-effector slice
instead of the base.

Entity references stay symbolic at parse time and resolve against a
:class:`~planguard.world.WorldState` when instructions are expanded or
constraints compiled; :func:`render` reproduces the canonical text form,
and ``parse_plan(render(plan)) == plan`` for every grammar-valid plan.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .barriers import (
    BASE,
    EE,
    Barrier,
    DistanceBarrier,
    keep_away,
    keep_out,
    separation,
    speed_cap_near,
    workspace_polygon,
)
from .config import RunConfig
from .geometry import Circle, ConvexPolygon
from .world import (
    GRIPPER_CLOSED,
    GRIPPER_OPEN,
    AtSafePosition,
    BaseGoal,
    Condition,
    EeGoal,
    GraspSpec,
    GripperGoal,
    Holding,
    HumanState,
    ObjectState,
    Pose2,
    RobotState,
    StaticEntity,
    Subgoal,
    WaitFor,
    WorldState,
    normalize_name,
)

__all__ = [
    "MOVE", "PICK", "PLACE", "RELEASE", "MOVE_OBJECT", "WAIT", "CHECK", "VERBS",
    "NO_COLLIDE", "KEEP_AWAY", "SLOW_NEAR", "WORKSPACE_LIMIT", "CONSTRAINT_KINDS",
    "ParseError", "ResolutionError",
    "Instruction", "TaskPlan", "ConstraintSpec", "GraspSpec",
    "parse_plan", "parse_condition", "render", "render_instruction",
    "parse_constraints", "render_constraint", "render_constraints",
    "expand", "compile_constraint",
    "plan_document", "constraint_document",
]

MOVE = "move"
PICK = "pick"
PLACE = "place"
RELEASE = "release"
MOVE_OBJECT = "move_object"
WAIT = "wait"
CHECK = "check"
VERBS = (MOVE, PICK, PLACE, RELEASE, MOVE_OBJECT, WAIT, CHECK)

NO_COLLIDE = "no_collide"
KEEP_AWAY = "keep_away"
SLOW_NEAR = "slow_near"
WORKSPACE_LIMIT = "workspace_limit"
CONSTRAINT_KINDS = (NO_COLLIDE, KEEP_AWAY, SLOW_NEAR, WORKSPACE_LIMIT)

# verbs whose grammar takes a second entity ("place X in Y", "move X to Y")
_TWO_ENTITY_VERBS = (PLACE, MOVE_OBJECT)


class ParseError(ValueError):
    """A plan or constraint line that does not follow the grammar."""

    def __init__(self, reason: str, line_no: int = 0, raw: str = "") -> None:
        self.reason = reason
        self.line_no = line_no
        self.raw = raw
        super().__init__(f"line {line_no}: {reason}: {raw!r}" if raw else reason)


class ResolutionError(ValueError):
    """An entity reference that does not resolve against the scene."""


@dataclass(frozen=True)
class Instruction:
    """One typed plan step.

    ``target`` (and ``dest`` for two-entity verbs) are symbolic entity
    references; ``raw`` preserves the original text verbatim for prompts
    and judging and never participates in equality.
    """

    robot: str
    verb: str
    target: str
    dest: str | None = None
    condition: Condition | None = None
    raw: str = field(default="", compare=False)
    index: int = 0

    def __post_init__(self) -> None:
        if self.verb not in VERBS:
            raise ValueError(f"unknown verb {self.verb!r}; expected one of {VERBS}")
        if self.verb in _TWO_ENTITY_VERBS and not self.dest:
            raise ValueError(f"{self.verb} requires a destination entity")
        if self.verb not in _TWO_ENTITY_VERBS and self.dest is not None:
            raise ValueError(f"{self.verb} takes no destination entity")


@dataclass
class TaskPlan:
    """An ordered instruction list with optional per-step preconditions."""

    task: str
    instructions: list[Instruction]
    preconditions: dict[int, Condition] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for pos, ins in enumerate(self.instructions):
            if ins.index != pos:
                raise ValueError(
                    f"instruction indices must be contiguous from 0; "
                    f"found index {ins.index} at position {pos}"
                )
        for idx in self.preconditions:
            if not 0 <= idx < len(self.instructions):
                raise ValueError(f"precondition index {idx} out of range")


@dataclass(frozen=True)
class ConstraintSpec:
    """One typed safety directive, still symbolic about its target.

    ``slice_`` is the control slice the constraint binds ("base" or
    "ee"); ``scope`` is an inclusive instruction-index range, or None
    for a global constraint.  ``raw`` never participates in equality.
    """

    robot: str
    kind: str
    target: str
    slice_: str = BASE
    radius: float | None = None
    v_max: float | None = None
    d_slow: float | None = None
    scope: tuple[int, int] | None = None
    raw: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.slice_ not in (BASE, EE):
            raise ValueError(f"unknown control slice {self.slice_!r}")
        for label, value in (("radius", self.radius), ("v_max", self.v_max),
                             ("d_slow", self.d_slow)):
            if value is not None and not value > 0.0:
                raise ValueError(f"{label} must be positive, got {value}")
        if self.scope is not None:
            first, last = self.scope
            if first < 0 or last < first:
                raise ValueError(f"scope must be a valid index range, got {self.scope}")


# ---------------------------------------------------------------------------
# text -> structure


_INDEX_PREFIX = re.compile(r"^(?:step\s+)?\d+\s*[.):]\s*", re.I)
_WHEN_SPLIT = re.compile(r"\s+when\s+", re.I)
_ARTICLE = re.compile(r"^(?:the|a|an)\s+", re.I)
_ROBOT_NUM = re.compile(r"^robot[\s_-]*(\d+)$", re.I)

_RE_MOVE_PAPER = re.compile(r"^move\s+(?P<r>.+?)\s+to\s+(?P<t>.+)$", re.I)
_RE_MOVE = re.compile(r"^(?P<r>.+?)\s+(?:move|go|navigate)s?\s+to\s+(?P<t>.+)$", re.I)
_RE_MOVE_OBJ = re.compile(r"^(?P<r>.+?)\s+moves?\s+(?P<t>.+?)\s+to\s+(?P<d>.+)$", re.I)
_RE_PICK = re.compile(r"^(?P<r>.+?)\s+picks?\s+(?:up\s+)?(?P<t>.+)$", re.I)
_RE_PLACE = re.compile(r"^(?P<r>.+?)\s+places?\s+(?P<t>.+?)\s+(?:in|into|on|onto)\s+(?P<d>.+)$", re.I)
_RE_RELEASE = re.compile(r"^(?P<r>.+?)\s+releases?\s+(?P<t>.+)$", re.I)
_RE_WAIT = re.compile(r"^(?P<r>.+?)\s+waits?\s+(?:for|until)\s+(?P<t>.+)$", re.I)
_RE_CHECK = re.compile(r"^(?P<r>.+?)\s+(?:checks?|verif(?:y|ies)|confirms?)\s+(?:that\s+)?(?P<t>.+)$", re.I)

_COND_SAFE = re.compile(
    r"^(?P<r>.+?)\s+(?:is\s+|to\s+be\s+|reaches\s+)?(?:at|in)?\s*"
    r"(?:the\s+|its\s+|a\s+)?safe\s+(?:position|location)$",
    re.I,
)
_COND_HOLD = re.compile(r"^(?P<r>.+?)\s+(?:is\s+)?holding\s+(?:the\s+)?(?P<o>.+)$", re.I)

_SAFE_POSITION_NAMES = frozenset({"safe position", "its safe position", "safe location"})
_HUMAN_COLLECTIVE = frozenset({
    "user", "users", "human", "humans", "person", "people", "personnel",
    "everyone", "all users", "all humans", "any user", "any human", "bystanders",
})


def _segments(text: str) -> list[tuple[int, str]]:
    """(line number, cleaned segment) pairs; commas join consecutive steps."""
    out: list[tuple[int, str]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        for part in line.split(","):
            seg = part.strip().rstrip(".").strip()
            if not seg:
                continue
            out.append((line_no, _INDEX_PREFIX.sub("", seg)))
    return out


def _squeeze(s: str) -> str:
    return " ".join(s.split())


def _clean_entity(s: str) -> str:
    s = _ARTICLE.sub("", _squeeze(s).strip("\"'"))
    if not s:
        raise ParseError("missing entity reference")
    return s


def _canon_robot(s: str) -> str:
    s = _clean_entity(s)
    m = _ROBOT_NUM.match(s)
    return f"Robot {m.group(1)}" if m else s


def parse_condition(text: str) -> Condition:
    """Parse a condition phrase ("<robot> at safe position" / "... holding <obj>")."""
    t = _squeeze(text)
    m = _COND_SAFE.match(t)
    if m:
        return AtSafePosition(_canon_robot(m.group("r")))
    m = _COND_HOLD.match(t)
    if m:
        return Holding(_canon_robot(m.group("r")), _clean_entity(m.group("o")))
    raise ParseError(f"unknown condition {t!r}")


def _parse_instruction(seg: str, index: int) -> tuple[Instruction, Condition | None]:
    """One grammar segment -> (instruction, optional 'when' precondition)."""
    parts = _WHEN_SPLIT.split(seg, maxsplit=1)
    body = parts[0].strip()
    when = parse_condition(parts[1]) if len(parts) == 2 else None

    m = _RE_MOVE_PAPER.match(body) or _RE_MOVE.match(body)
    if m:
        ins = Instruction(_canon_robot(m.group("r")), MOVE, _clean_entity(m.group("t")),
                          raw=seg, index=index)
        return ins, when
    m = _RE_MOVE_OBJ.match(body)
    if m:
        ins = Instruction(_canon_robot(m.group("r")), MOVE_OBJECT, _clean_entity(m.group("t")),
                          dest=_clean_entity(m.group("d")), raw=seg, index=index)
        return ins, when
    m = _RE_PICK.match(body)
    if m:
        ins = Instruction(_canon_robot(m.group("r")), PICK, _clean_entity(m.group("t")),
                          raw=seg, index=index)
        return ins, when
    m = _RE_PLACE.match(body)
    if m:
        ins = Instruction(_canon_robot(m.group("r")), PLACE, _clean_entity(m.group("t")),
                          dest=_clean_entity(m.group("d")), raw=seg, index=index)
        return ins, when
    m = _RE_RELEASE.match(body)
    if m:
        ins = Instruction(_canon_robot(m.group("r")), RELEASE, _clean_entity(m.group("t")),
                          raw=seg, index=index)
        return ins, when
    m = _RE_WAIT.match(body)
    if m:
        cond = parse_condition(m.group("t"))
        ins = Instruction(_canon_robot(m.group("r")), WAIT, cond.text(), condition=cond,
                          raw=seg, index=index)
        return ins, when
    m = _RE_CHECK.match(body)
    if m:
        cond = parse_condition(m.group("t"))
        ins = Instruction(_canon_robot(m.group("r")), CHECK, cond.text(), condition=cond,
                          raw=seg, index=index)
        return ins, when
    raise ParseError("unrecognized instruction")


def parse_plan(text: str, task: str = "") -> TaskPlan:
    """Parse plan text into a :class:`TaskPlan`.

    Raises :class:`ParseError` naming the offending line on any segment
    that falls outside the grammar, and ``ParseError("empty plan")`` when
    the input contains no instructions at all.
    """
    segments = _segments(text)
    if not segments:
        raise ParseError("empty plan")
    instructions: list[Instruction] = []
    preconditions: dict[int, Condition] = {}
    for index, (line_no, seg) in enumerate(segments):
        try:
            ins, when = _parse_instruction(seg, index)
        except ParseError as e:
            raise ParseError(e.reason, line_no, seg) from None
        instructions.append(ins)
        if when is not None:
            preconditions[index] = when
    return TaskPlan(task, instructions, preconditions)


# ---------------------------------------------------------------------------
# structure -> text


def render_instruction(ins: Instruction) -> str:
    """The canonical text form of one instruction (without its precondition)."""
    if ins.verb == MOVE:
        return f"Move {ins.robot} to {ins.target}"
    if ins.verb == PICK:
        return f"{ins.robot} pick the {ins.target}"
    if ins.verb == PLACE:
        return f"{ins.robot} place {ins.target} in {ins.dest}"
    if ins.verb == RELEASE:
        return f"{ins.robot} release {ins.target}"
    if ins.verb == MOVE_OBJECT:
        return f"{ins.robot} move {ins.target} to {ins.dest}"
    if ins.verb == WAIT:
        return f"{ins.robot} wait for {ins.target}"
    if ins.verb == CHECK:
        return f"{ins.robot} check {ins.target}"
    raise ValueError(f"unknown verb {ins.verb!r}")


def render(plan: TaskPlan) -> str:
    """Canonical plan text: ``parse_plan(render(plan)) == plan``."""
    lines = []
    for ins in plan.instructions:
        line = render_instruction(ins)
        cond = plan.preconditions.get(ins.index)
        if cond is not None:
            line += f" when {cond.text()}"
        lines.append(line)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# constraint text


_RE_SUBJECT = re.compile(
    r"^(?P<r>.+?)(?:'s)?\s+(?:(?P<sel>manipulator|arm|end[\s-]?effector|gripper|base)\s+)?"
    r"must\s+(?P<rest>.+)$",
    re.I,
)
_RE_SCOPE = re.compile(
    r"\s+(?:during|for)\s+steps?\s+(?P<a>\d+)(?:\s*(?:-|–|to|through)\s*(?P<b>\d+))?$",
    re.I,
)
_RE_NO_COLLIDE = re.compile(r"^not\s+collide\s+with\s+(?:the\s+)?(?P<t>.+)$", re.I)
_RE_KEEP_AWAY = re.compile(
    r"^(?:stay|keep)\s+(?:away\s+from|(?:a\s+)?safe\s+distance\s+from)\s+(?:the\s+)?"
    r"(?P<t>.+?)(?:\s+by\s+at\s+least\s+(?P<x>\d+(?:\.\d+)?)\s*m(?:eters?)?)?$",
    re.I,
)
_RE_SLOW_NEAR = re.compile(
    r"^slow\s+down\s+(?:its\s+motion\s+)?(?:when\s+)?(?:near|close\s+to)\s+(?:the\s+)?"
    r"(?P<t>.+?)(?:\s+below\s+(?P<v>\d+(?:\.\d+)?)\s*m/s)?"
    r"(?:\s+within\s+(?P<d>\d+(?:\.\d+)?)\s*m(?:eters?)?)?$",
    re.I,
)
_RE_WORKSPACE = re.compile(r"^(?:stay|remain)\s+(?:inside|within|in)\s+(?:the\s+)?(?P<t>.+)$", re.I)

_EE_SELECTORS = frozenset({"manipulator", "arm", "end effector", "end-effector", "endeffector", "gripper"})


def _parse_constraint(seg: str) -> ConstraintSpec:
    scope: tuple[int, int] | None = None
    m = _RE_SCOPE.search(seg)
    body = seg
    if m:
        first = int(m.group("a"))
        last = int(m.group("b")) if m.group("b") else first
        scope = (first, last)
        body = seg[: m.start()]
    m = _RE_SUBJECT.match(_squeeze(body))
    if not m:
        raise ParseError("unrecognized safety directive")
    robot = _canon_robot(m.group("r"))
    sel = (m.group("sel") or "").lower().replace("-", " ")
    slice_ = EE if sel in _EE_SELECTORS else BASE
    rest = m.group("rest").strip()

    d = _RE_NO_COLLIDE.match(rest)
    if d:
        return ConstraintSpec(robot, NO_COLLIDE, _clean_entity(d.group("t")),
                              slice_=slice_, scope=scope, raw=seg)
    d = _RE_KEEP_AWAY.match(rest)
    if d:
        radius = float(d.group("x")) if d.group("x") else None
        return ConstraintSpec(robot, KEEP_AWAY, _clean_entity(d.group("t")),
                              slice_=slice_, radius=radius, scope=scope, raw=seg)
    d = _RE_SLOW_NEAR.match(rest)
    if d:
        v_max = float(d.group("v")) if d.group("v") else None
        d_slow = float(d.group("d")) if d.group("d") else None
        return ConstraintSpec(robot, SLOW_NEAR, _clean_entity(d.group("t")),
                              slice_=slice_, v_max=v_max, d_slow=d_slow, scope=scope, raw=seg)
    d = _RE_WORKSPACE.match(rest)
    if d:
        return ConstraintSpec(robot, WORKSPACE_LIMIT, _clean_entity(d.group("t")),
                              slice_=slice_, scope=scope, raw=seg)
    raise ParseError(f"unknown safety directive {rest!r}")


def parse_constraints(text: str) -> list[ConstraintSpec]:
    """Parse safety-directive text into constraint specifications."""
    specs = []
    for line_no, seg in _segments(text):
        try:
            specs.append(_parse_constraint(seg))
        except ParseError as e:
            raise ParseError(e.reason, line_no, seg) from None
    return specs


def render_constraint(spec: ConstraintSpec) -> str:
    """Canonical text form: ``parse_constraints(render_constraint(s)) == [s]``."""
    sel = " manipulator" if spec.slice_ == EE else ""
    if spec.kind == NO_COLLIDE:
        line = f"{spec.robot}{sel} must not collide with {spec.target}"
    elif spec.kind == KEEP_AWAY:
        line = f"{spec.robot}{sel} must stay away from {spec.target}"
        if spec.radius is not None:
            line += f" by at least {spec.radius:g} m"
    elif spec.kind == SLOW_NEAR:
        line = f"{spec.robot}{sel} must slow down near {spec.target}"
        if spec.v_max is not None:
            line += f" below {spec.v_max:g} m/s"
        if spec.d_slow is not None:
            line += f" within {spec.d_slow:g} m"
    elif spec.kind == WORKSPACE_LIMIT:
        line = f"{spec.robot}{sel} must stay inside {spec.target}"
    else:  # pragma: no cover - ConstraintSpec validates kind
        raise ValueError(f"unknown constraint kind {spec.kind!r}")
    if spec.scope is not None:
        first, last = spec.scope
        line += f" during step {first}" if first == last else f" during steps {first}-{last}"
    return line


def render_constraints(specs: list[ConstraintSpec]) -> str:
    return "\n".join(render_constraint(s) for s in specs)


# ---------------------------------------------------------------------------
# resolution helpers


def _resolve_robot(name: str, world: WorldState) -> RobotState:
    e = world.find(name)
    if not isinstance(e, RobotState):
        raise ResolutionError(f"unknown robot {name!r}")
    return e


def _resolve_object(name: str, world: WorldState) -> ObjectState:
    e = world.find(name)
    if e is None:
        raise ResolutionError(f"unknown object {name!r}")
    if not isinstance(e, ObjectState):
        raise ResolutionError(f"{name!r} is not a manipulable object")
    return e


def _validate_condition(cond: Condition, world: WorldState) -> None:
    if isinstance(cond, AtSafePosition):
        r = world.find(cond.robot)
        if not isinstance(r, RobotState):
            raise ResolutionError(f"condition references unknown robot {cond.robot!r}")
        if r.safe_position is None:
            raise ResolutionError(f"robot {r.id!r} has no designated safe position")
        return
    if isinstance(cond, Holding):
        r = world.find(cond.robot)
        if not isinstance(r, RobotState):
            raise ResolutionError(f"condition references unknown robot {cond.robot!r}")
        o = world.find(cond.obj)
        if not isinstance(o, ObjectState):
            raise ResolutionError(f"condition references unknown object {cond.obj!r}")
        return
    raise TypeError(f"unknown condition type {type(cond).__name__}")


# ---------------------------------------------------------------------------
# instruction expansion


def expand(ins: Instruction, world: WorldState, config: RunConfig | None = None) -> list[Subgoal]:
    """Expand one instruction into controller subgoals against a scene.

    Raises :class:`ResolutionError` when an entity reference does not
    resolve (or a Pick names a non-graspable object).
    """
    cfg = config or RunConfig()
    robot = _resolve_robot(ins.robot, world)
    if ins.verb == MOVE:
        return [_move_goal(robot, ins.target, world, cfg)]
    if ins.verb == PICK:
        return _pick_subgoals(ins.target, world, cfg)
    if ins.verb == PLACE:
        return _place_subgoals(ins.target, ins.dest, world, cfg)
    if ins.verb == RELEASE:
        obj = _resolve_object(ins.target, world)
        return [GripperGoal(GRIPPER_OPEN, obj=obj.id)]
    if ins.verb == MOVE_OBJECT:
        obj = _resolve_object(ins.target, world)
        goals = [] if robot.held == obj.id else _pick_subgoals(ins.target, world, cfg)
        return goals + _place_subgoals(ins.target, ins.dest, world, cfg)
    if ins.verb in (WAIT, CHECK):
        cond = ins.condition or parse_condition(ins.target)
        _validate_condition(cond, world)
        return [WaitFor(cond)]
    raise ValueError(f"unknown verb {ins.verb!r}")  # pragma: no cover - Instruction validates


def _move_goal(robot: RobotState, target: str, world: WorldState, cfg: RunConfig) -> BaseGoal:
    """A standoff pose facing the target (or the robot's own safe position)."""
    if normalize_name(target) in _SAFE_POSITION_NAMES:
        if robot.safe_position is None:
            raise ResolutionError(f"robot {robot.id!r} has no designated safe position")
        gx, gy = float(robot.safe_position[0]), float(robot.safe_position[1])
        dx, dy = gx - robot.base.x, gy - robot.base.y
        theta = math.atan2(dy, dx) if math.hypot(dx, dy) > 1e-9 else robot.base.theta
        return BaseGoal(Pose2(gx, gy, theta))
    xy = world.entity_xy(target)
    if xy is None:
        raise ResolutionError(f"unknown location {target!r}")
    tx, ty = float(xy[0]), float(xy[1])
    dx, dy = tx - robot.base.x, ty - robot.base.y
    dist = math.hypot(dx, dy)
    if dist <= 1e-9:
        return BaseGoal(Pose2(robot.base.x, robot.base.y, robot.base.theta))
    ux, uy = dx / dist, dy / dist
    return BaseGoal(Pose2(tx - cfg.standoff * ux, ty - cfg.standoff * uy, math.atan2(dy, dx)))


def _pick_subgoals(target: str, world: WorldState, cfg: RunConfig) -> list[Subgoal]:
    """align / reach / close / lift — always exactly four subgoals."""
    obj = _resolve_object(target, world)
    if not obj.graspable:
        raise ResolutionError(f"object {obj.id!r} is not graspable")
    grasp = obj.grasp_point_world()
    lift = np.array([0.0, 0.0, 1.0])
    return [
        EeGoal(grasp + cfg.align_height * lift),
        EeGoal(grasp.copy()),
        GripperGoal(GRIPPER_CLOSED, obj=obj.id),
        EeGoal(grasp + cfg.lift_height * lift),
    ]


def _place_subgoals(target: str, dest: str, world: WorldState, cfg: RunConfig) -> list[Subgoal]:
    """approach / lower / open / retreat — mirrors the pick decomposition."""
    obj = _resolve_object(target, world)
    point = _place_point(dest, world, cfg)
    lift = np.array([0.0, 0.0, 1.0])
    return [
        EeGoal(point + cfg.align_height * lift),
        EeGoal(point.copy()),
        GripperGoal(GRIPPER_OPEN, obj=obj.id),
        EeGoal(point + cfg.lift_height * lift),
    ]


def _place_point(dest: str, world: WorldState, cfg: RunConfig) -> np.ndarray:
    e = world.find(dest)
    if e is None:
        raise ResolutionError(f"unknown placement target {dest!r}")
    if isinstance(e, ObjectState):
        return np.array([e.pose.x, e.pose.y, e.height + cfg.place_clearance])
    if isinstance(e, StaticEntity):
        xy = world.entity_xy(dest)
        return np.array([float(xy[0]), float(xy[1]), cfg.place_clearance])
    raise ResolutionError(f"cannot place an object onto {dest!r}")


# ---------------------------------------------------------------------------
# constraint compilation


def compile_constraint(
    spec: ConstraintSpec, world: WorldState, config: RunConfig | None = None
) -> list[Barrier]:
    """Bind a constraint specification to barrier functions over a scene.

    The returned barriers hold references into ``world`` (live human and
    robot states), so they track moving targets tick by tick.  A KeepAway
    or SlowNear aimed at "users" in a humanless scene compiles to an
    empty list (vacuously satisfied).
    """
    cfg = config or RunConfig()
    robot = _resolve_robot(spec.robot, world)
    if spec.kind == NO_COLLIDE:
        return _compile_no_collide(spec, robot, world, cfg)
    if spec.kind == KEEP_AWAY:
        return _compile_keep_away(spec, robot, world, cfg)
    if spec.kind == SLOW_NEAR:
        return _compile_slow_near(spec, robot, world, cfg)
    if spec.kind == WORKSPACE_LIMIT:
        return _compile_workspace(spec, robot, world, cfg)
    raise ValueError(f"unknown constraint kind {spec.kind!r}")  # pragma: no cover


def _body_radius(robot: RobotState, slice_: str) -> float:
    """Clearance from the slice reference point to the robot surface."""
    return robot.radius if slice_ == BASE else 0.0


def _human_target(h: HumanState):
    def live() -> tuple[np.ndarray, np.ndarray]:
        return h.position.copy(), h.velocity.copy()

    return live


def _robot_base_target(world: WorldState, rid: str):
    def live() -> tuple[np.ndarray, np.ndarray]:
        r = world.robots[rid]
        return np.array([r.base.x, r.base.y]), np.asarray(r.base_vel[:2], dtype=np.float64)

    return live


def _static_target(xy: np.ndarray):
    p = np.array([float(xy[0]), float(xy[1])])

    def live() -> tuple[np.ndarray, np.ndarray]:
        return p.copy(), np.zeros(2)

    return live


def _matching_humans(target: str, world: WorldState) -> list[HumanState] | None:
    """All humans for a collective reference, a singleton for a named one."""
    if normalize_name(target) in _HUMAN_COLLECTIVE:
        return list(world.humans.values())
    e = world.find(target)
    if isinstance(e, HumanState):
        return [e]
    return None


def _entity_shape(e) -> Circle | ConvexPolygon:
    return e.world_shape() if isinstance(e, ObjectState) else e.shape


def _compile_no_collide(spec, robot, world, cfg) -> list[Barrier]:
    e = world.find(spec.target)
    if e is None:
        raise ResolutionError(f"constraint target {spec.target!r} not in scene")
    if isinstance(e, RobotState):
        d_min = max(cfg.separation_min, robot.radius + e.radius + cfg.keep_out_margin)
        return separation(robot.id, e.id, d_min, lambda rid: _robot_base_target(world, rid)())
    if isinstance(e, HumanState):
        radius = cfg.keep_out_margin + _body_radius(robot, spec.slice_)
        return [keep_away(robot.id, _human_target(e), radius,
                          slice_=spec.slice_, label=f"no_collide:{e.id}")]
    margin = cfg.keep_out_margin + _body_radius(robot, spec.slice_)
    return [keep_out(robot.id, _entity_shape(e), margin=margin,
                     slice_=spec.slice_, label=f"no_collide:{e.id}")]


def _compile_keep_away(spec, robot, world, cfg) -> list[Barrier]:
    humans = _matching_humans(spec.target, world)
    if humans is not None:
        return [
            keep_away(robot.id, _human_target(h),
                      spec.radius if spec.radius is not None else cfg.keep_away_radius[h.access],
                      slice_=spec.slice_, label=f"keep_away:{h.id}")
            for h in humans
        ]
    radius = spec.radius if spec.radius is not None else cfg.keep_away_entity_radius
    e = world.find(spec.target)
    if e is None:
        raise ResolutionError(f"constraint target {spec.target!r} not in scene")
    if isinstance(e, RobotState):
        return [keep_away(robot.id, _robot_base_target(world, e.id), radius,
                          slice_=spec.slice_, label=f"keep_away:{e.id}")]
    margin = radius + _body_radius(robot, spec.slice_)
    return [keep_out(robot.id, _entity_shape(e), margin=margin,
                     slice_=spec.slice_, label=f"keep_away:{e.id}")]


def _compile_slow_near(spec, robot, world, cfg) -> list[Barrier]:
    """Speed caps act on the end-effector regardless of the named slice."""
    v_max = spec.v_max if spec.v_max is not None else cfg.slow_v_max
    d_slow = spec.d_slow if spec.d_slow is not None else cfg.slow_d_slow
    humans = _matching_humans(spec.target, world)
    if humans is not None:
        return [
            speed_cap_near(robot.id, _human_target(h), v_max, d_slow, label=f"speed_cap:{h.id}")
            for h in humans
        ]
    e = world.find(spec.target)
    if e is None:
        raise ResolutionError(f"constraint target {spec.target!r} not in scene")
    if isinstance(e, RobotState):
        target = _robot_base_target(world, e.id)
    else:
        target = _static_target(world.entity_xy(spec.target))
    return [speed_cap_near(robot.id, target, v_max, d_slow, label=f"speed_cap:{e.id}")]


def _compile_workspace(spec, robot, world, cfg) -> list[Barrier]:
    e = world.find(spec.target)
    if e is None:
        raise ResolutionError(f"constraint target {spec.target!r} not in scene")
    if not isinstance(e, (StaticEntity, ObjectState)):
        raise ResolutionError(f"{spec.target!r} is not a region")
    shape = _entity_shape(e)
    margin = _body_radius(robot, spec.slice_)
    if isinstance(shape, ConvexPolygon):
        return workspace_polygon(robot.id, shape, slice_=spec.slice_, margin=margin)
    if isinstance(shape, Circle):
        inner = float(shape.radius) - margin
        if inner <= 0.0:
            raise ResolutionError(f"region {spec.target!r} is too small for robot {robot.id!r}")
        return [DistanceBarrier(f"{robot.id}:workspace:{e.id}", (robot.id, spec.slice_),
                                _static_target(np.asarray(shape.center)), inner, sign=-1)]
    raise ResolutionError(f"region {spec.target!r} has an unsupported shape")


# ---------------------------------------------------------------------------
# structured documents (for traces)


def plan_document(plan: TaskPlan) -> dict:
    """JSON-ready form of a plan for execution traces."""
    return {
        "task": plan.task,
        "instructions": [
            {
                "index": ins.index,
                "robot": ins.robot,
                "verb": ins.verb,
                "target": ins.target,
                **({"dest": ins.dest} if ins.dest is not None else {}),
                "raw": ins.raw,
            }
            for ins in plan.instructions
        ],
        "preconditions": {str(i): c.text() for i, c in sorted(plan.preconditions.items())},
    }


def constraint_document(spec: ConstraintSpec) -> dict:
    """JSON-ready form of a constraint specification for traces."""
    doc: dict = {"robot": spec.robot, "kind": spec.kind, "target": spec.target,
                 "slice": spec.slice_}
    for key, value in (("radius", spec.radius), ("v_max", spec.v_max), ("d_slow", spec.d_slow)):
        if value is not None:
            doc[key] = value
    if spec.scope is not None:
        doc["scope"] = [spec.scope[0], spec.scope[1]]
    return doc
