"""Kinematic multi-robot world: state, scene loading, stepping, goal checks.

Each robot is a velocity-controlled omnidirectional base on SE(2) (command =
world-frame twist [vx, vy, omega]) plus an acceleration-controlled point
end-effector in R^3. Integration is semi-implicit Euler: velocities update
first, positions integrate with the new velocity. Collision queries are
planar; the end-effector z coordinate matters for reach, grasping, and
end-effector goals only.

Humans follow scripted waypoint paths from the scene file and are never
influenced by the robots.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .config import Tolerances
from .geometry import Circle, ConvexPolygon, Point, Shape, transform_polygon

SCHEMA_VERSION = 1

GRIPPER_OPEN = "open"
GRIPPER_CLOSED = "closed"

ACCESS_LEVELS = ("non_technical", "technical")

ALL_CAPABILITIES = ("move", "pick", "place", "release", "move_object", "wait", "check")

CONTROL_DIM = 6  # [vx, vy, omega, ax, ay, az]


class SceneError(ValueError):
    """Raised when a scene document fails validation."""


class WorldError(RuntimeError):
    """Raised when stepping is handed invalid controls or state corrupts."""


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def normalize_name(name: str) -> str:
    """Canonical entity-name form: case/underscore/extra-space insensitive."""
    return " ".join(name.replace("_", " ").replace("-", " ").casefold().split())


@dataclass
class Pose2:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        self.theta = wrap_angle(float(self.theta))
        self.x = float(self.x)
        self.y = float(self.y)

    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class GraspSpec:
    point: np.ndarray        # offset from the object pose, object frame, m
    approach: np.ndarray     # unit approach axis, world frame

    @staticmethod
    def default() -> "GraspSpec":
        return GraspSpec(point=np.zeros(3), approach=np.array([0.0, 0.0, -1.0]))


@dataclass
class RobotState:
    id: str
    base: Pose2
    ee_pos: np.ndarray                      # world frame, m
    base_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ee_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gripper: str = GRIPPER_OPEN
    held: str | None = None
    reach: float = 1.5                      # m, max ||ee - base|| (base at z=0)
    radius: float = 0.2                     # m, base body radius for clearances
    capabilities: tuple[str, ...] = ALL_CAPABILITIES
    safe_position: tuple[float, float] | None = None

    def base_shape(self) -> Circle:
        return Circle((self.base.x, self.base.y), self.radius)

    def ee_point(self) -> Point:
        return Point(float(self.ee_pos[0]), float(self.ee_pos[1]))

    def ee_anchor_distance(self) -> float:
        """3D distance from the base anchor (base xy at z=0) to the end-effector."""
        dx = self.ee_pos[0] - self.base.x
        dy = self.ee_pos[1] - self.base.y
        return math.sqrt(dx * dx + dy * dy + self.ee_pos[2] * self.ee_pos[2])


@dataclass
class ObjectState:
    id: str
    pose: Pose2
    height: float                           # z of the object's reference point, m
    footprint: dict                         # {"circle": r} or {"polygon": [[x,y],...]} local frame
    graspable: bool = False
    grasp: GraspSpec | None = None

    def world_shape(self) -> Shape:
        if "circle" in self.footprint:
            return Circle((self.pose.x, self.pose.y), float(self.footprint["circle"]))
        return transform_polygon(self.footprint["polygon"], self.pose.x, self.pose.y, self.pose.theta)

    def grasp_point_world(self) -> np.ndarray:
        g = self.grasp or GraspSpec.default()
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        ox, oy, oz = g.point
        return np.array(
            [self.pose.x + c * ox - s * oy, self.pose.y + s * ox + c * oy, self.height + oz]
        )


@dataclass
class HumanState:
    id: str
    position: np.ndarray                    # planar, m
    velocity: np.ndarray                    # planar, m/s
    access: str = "non_technical"

    def point(self) -> Point:
        return Point(float(self.position[0]), float(self.position[1]))


@dataclass
class StaticEntity:
    id: str
    shape: Shape                            # world frame
    kind: str = "obstacle"                  # "obstacle" or "region"


@dataclass
class HumanPath:
    waypoints: np.ndarray                   # (k, 2)
    speed: float
    start_time: float = 0.0

    def state_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Position and velocity at time t along the piecewise-linear path."""
        if t <= self.start_time or len(self.waypoints) < 2 or self.speed <= 0.0:
            return self.waypoints[0].copy(), np.zeros(2)
        s = (t - self.start_time) * self.speed  # arc length travelled
        for i in range(len(self.waypoints) - 1):
            a, b = self.waypoints[i], self.waypoints[i + 1]
            seg = float(np.hypot(*(b - a)))
            if s <= seg or seg == 0.0:
                if seg == 0.0:
                    continue
                d = (b - a) / seg
                return a + s * d, d * self.speed
            s -= seg
        return self.waypoints[-1].copy(), np.zeros(2)


# ----------------------------------------------------------------- subgoals ---


@dataclass
class BaseGoal:
    pose: Pose2
    tol: Tolerances | None = None


@dataclass
class EeGoal:
    point: np.ndarray                       # world frame, m
    tol: Tolerances | None = None


@dataclass
class GripperGoal:
    state: str                              # GRIPPER_OPEN or GRIPPER_CLOSED
    obj: str | None = None                  # object that must end up held on close


@dataclass
class WaitFor:
    condition: "Condition"


Subgoal = BaseGoal | EeGoal | GripperGoal | WaitFor


@dataclass(frozen=True)
class AtSafePosition:
    robot: str

    def text(self) -> str:
        return f"{self.robot} at safe position"


@dataclass(frozen=True)
class Holding:
    robot: str
    obj: str

    def text(self) -> str:
        return f"{self.robot} holding {self.obj}"


Condition = AtSafePosition | Holding


# -------------------------------------------------------------------- world ---


class WorldState:
    def __init__(self, robots, objects, humans, statics, human_paths=None, time=0.0):
        self.time = float(time)
        self.robots: dict[str, RobotState] = {}
        self.objects: dict[str, ObjectState] = {}
        self.humans: dict[str, HumanState] = {}
        self.statics: dict[str, StaticEntity] = {}
        self.human_paths: dict[str, HumanPath] = dict(human_paths or {})
        self._index = {}
        for group, items in (
            (self.robots, robots),
            (self.objects, objects),
            (self.humans, humans),
            (self.statics, statics),
        ):
            for item in items:
                norm = normalize_name(item.id)
                if norm in self._index:
                    raise SceneError(f"duplicate entity id (after normalization): {item.id!r}")
                self._index[norm] = item
                group[item.id] = item
        if not self.robots:
            raise SceneError("scene has no robots")

    # -- lookup ------------------------------------------------------------

    def find(self, name: str):
        """Resolve an entity by name; None when unknown."""
        return self._index.get(normalize_name(name))

    def entity_xy(self, name: str) -> np.ndarray | None:
        e = self.find(name)
        if e is None:
            return None
        if isinstance(e, RobotState):
            return e.base.xy()
        if isinstance(e, ObjectState):
            return e.pose.xy()
        if isinstance(e, HumanState):
            return e.position.copy()
        if isinstance(e, StaticEntity):
            return _shape_center(e.shape)
        return None

    # -- stepping ----------------------------------------------------------

    def step(self, controls: dict[str, np.ndarray], dt: float) -> None:
        """Advance every robot by its 6-dof control, then scripted humans.

        controls maps robot id -> [vx, vy, omega, ax, ay, az].
        """
        if not (dt > 0.0) or not math.isfinite(dt):
            raise WorldError(f"dt must be positive and finite, got {dt}")
        prepared = {}
        for rid in self.robots:
            if rid not in controls:
                raise WorldError(f"missing control for robot {rid!r}")
            u = np.asarray(controls[rid], dtype=np.float64).reshape(-1)
            if u.shape != (CONTROL_DIM,):
                raise WorldError(f"control for {rid!r} must have dim {CONTROL_DIM}, got {u.shape}")
            if not np.all(np.isfinite(u)):
                raise WorldError(f"control for {rid!r} is not finite")
        for rid, r in self.robots.items():
            u = np.asarray(controls[rid], dtype=np.float64).reshape(-1)
            r.base_vel = u[:3].copy()
            r.base.x += u[0] * dt
            r.base.y += u[1] * dt
            r.base.theta = wrap_angle(r.base.theta + u[2] * dt)
            r.ee_vel = r.ee_vel + u[3:] * dt
            r.ee_pos = r.ee_pos + r.ee_vel * dt
            prepared[rid] = r
        self.time += dt
        for hid, h in self.humans.items():
            path = self.human_paths.get(hid)
            if path is not None:
                h.position, h.velocity = path.state_at(self.time)
        for r in prepared.values():
            if r.held is not None:
                obj = self.objects[r.held]
                obj.pose.x = float(r.ee_pos[0])
                obj.pose.y = float(r.ee_pos[1])
                obj.height = float(r.ee_pos[2])
            # the filter keeps this; a gross breach means a controller bug
            if r.ee_anchor_distance() > r.reach + 0.1:
                raise WorldError(
                    f"robot {r.id!r} end-effector left its reach envelope "
                    f"({r.ee_anchor_distance():.3f} > {r.reach} m)"
                )

    # -- conditions and subgoals --------------------------------------------

    def condition_holds(self, cond: Condition, safe_radius: float = 0.3) -> bool:
        if isinstance(cond, AtSafePosition):
            r = self.find(cond.robot)
            if not isinstance(r, RobotState) or r.safe_position is None:
                return False
            dx = r.base.x - r.safe_position[0]
            dy = r.base.y - r.safe_position[1]
            return math.hypot(dx, dy) <= safe_radius
        if isinstance(cond, Holding):
            r = self.find(cond.robot)
            o = self.find(cond.obj)
            return isinstance(r, RobotState) and isinstance(o, ObjectState) and r.held == o.id
        raise TypeError(f"unknown condition type {type(cond).__name__}")

    def snapshot(self) -> dict:
        """JSON-ready state sample for traces."""
        return {
            "t": round(self.time, 9),
            "robots": {
                rid: {
                    "base": [r.base.x, r.base.y, r.base.theta],
                    "base_vel": r.base_vel.tolist(),
                    "ee": r.ee_pos.tolist(),
                    "ee_vel": r.ee_vel.tolist(),
                    "gripper": r.gripper,
                    "held": r.held,
                }
                for rid, r in self.robots.items()
            },
            "objects": {
                oid: {"pose": [o.pose.x, o.pose.y, o.pose.theta], "height": o.height}
                for oid, o in self.objects.items()
            },
            "humans": {
                hid: {"position": h.position.tolist(), "velocity": h.velocity.tolist(), "access": h.access}
                for hid, h in self.humans.items()
            },
        }


def _shape_center(shape: Shape) -> np.ndarray:
    if isinstance(shape, Point):
        return np.array([shape.x, shape.y])
    if isinstance(shape, Circle):
        return np.array(shape.center, dtype=np.float64)
    return shape.vertices.mean(axis=0)


def subgoal_achieved(world: WorldState, robot_id: str, goal: Subgoal, tol: Tolerances | None = None,
                     safe_radius: float = 0.3, grasp_range: float = 0.03) -> bool:
    """True when the robot satisfies the subgoal under the given tolerances."""
    t = tol or Tolerances()
    r = world.robots[robot_id]
    if isinstance(goal, BaseGoal):
        gt = goal.tol or t
        dx = r.base.x - goal.pose.x
        dy = r.base.y - goal.pose.y
        if math.hypot(dx, dy) > gt.pos:
            return False
        if abs(wrap_angle(r.base.theta - goal.pose.theta)) > gt.ang:
            return False
        return float(np.linalg.norm(r.base_vel)) <= gt.vel
    if isinstance(goal, EeGoal):
        gt = goal.tol or t
        if float(np.linalg.norm(r.ee_pos - goal.point)) > gt.pos:
            return False
        return float(np.linalg.norm(r.ee_vel)) <= gt.vel
    if isinstance(goal, GripperGoal):
        if r.gripper != goal.state:
            return False
        if goal.state == GRIPPER_CLOSED and goal.obj is not None:
            held = world.find(goal.obj)
            return isinstance(held, ObjectState) and r.held == held.id
        return True
    if isinstance(goal, WaitFor):
        return world.condition_holds(goal.condition, safe_radius=safe_radius)
    raise TypeError(f"unknown subgoal type {type(goal).__name__}")


# -------------------------------------------------------------- scene files ---


def load_scene(document: dict) -> WorldState:
    """Build a world from a scene document (already parsed JSON)."""
    if not isinstance(document, dict):
        raise SceneError("scene document must be a JSON object")
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SceneError(f"unsupported scene schema_version {version!r}, expected {SCHEMA_VERSION}")
    robots = [_parse_robot(d) for d in document.get("robots", [])]
    objects = [_parse_object(d) for d in document.get("objects", [])]
    humans = [_parse_human(d) for d in document.get("humans", [])]
    statics = [_parse_static(d) for d in document.get("statics", [])]
    paths = {}
    for hid, d in (document.get("human_paths") or {}).items():
        if not any(h.id == hid for h in humans):
            raise SceneError(f"human_paths references unknown human {hid!r}")
        wps = np.asarray(d.get("waypoints", []), dtype=np.float64)
        if wps.ndim != 2 or wps.shape[1] != 2 or len(wps) < 1:
            raise SceneError(f"human path for {hid!r} needs (k, 2) waypoints")
        paths[hid] = HumanPath(wps, float(d.get("speed", 0.5)), float(d.get("start_time", 0.0)))
    world = WorldState(robots, objects, humans, statics, paths)
    for hid, path in paths.items():
        h = world.humans[hid]
        h.position, h.velocity = path.state_at(world.time)
    return world


def _shape_document(shape: Shape) -> dict:
    if isinstance(shape, Circle):
        return {"circle": {"center": [float(shape.center[0]), float(shape.center[1])],
                           "radius": float(shape.radius)}}
    if isinstance(shape, ConvexPolygon):
        return {"polygon": [[float(x), float(y)] for x, y in shape.vertices]}
    raise SceneError(f"cannot serialize shape {type(shape).__name__}")


def scene_document(world: WorldState) -> dict:
    """Serialize a world to a scene document; inverse of :func:`load_scene`.

    Captures the full scene — geometry, capabilities, scripted human
    paths, and the current dynamic state — so a trace carrying this
    document can be re-judged or replayed without the original files.
    """
    doc: dict = {"schema_version": SCHEMA_VERSION}
    doc["robots"] = [
        {
            "id": r.id,
            "base": [r.base.x, r.base.y, r.base.theta],
            "ee": [float(v) for v in r.ee_pos],
            "base_vel": [float(v) for v in r.base_vel],
            "ee_vel": [float(v) for v in r.ee_vel],
            "gripper": r.gripper,
            "held": r.held,
            "reach": r.reach,
            "radius": r.radius,
            "capabilities": list(r.capabilities),
            "safe_position": (list(r.safe_position)
                              if r.safe_position is not None else None),
        }
        for r in world.robots.values()
    ]
    doc["objects"] = [
        {
            "id": o.id,
            "pose": [o.pose.x, o.pose.y, o.pose.theta],
            "height": o.height,
            "footprint": o.footprint,
            "graspable": o.graspable,
            **({"grasp": {"point": [float(v) for v in o.grasp.point],
                          "approach": [float(v) for v in o.grasp.approach]}}
               if o.grasp is not None else {}),
        }
        for o in world.objects.values()
    ]
    doc["humans"] = [
        {
            "id": h.id,
            "position": [float(v) for v in h.position],
            "velocity": [float(v) for v in h.velocity],
            "access": h.access,
        }
        for h in world.humans.values()
    ]
    doc["statics"] = [
        {"id": s.id, "kind": s.kind, **_shape_document(s.shape)}
        for s in world.statics.values()
    ]
    if world.human_paths:
        doc["human_paths"] = {
            hid: {
                "waypoints": [[float(x), float(y)] for x, y in p.waypoints],
                "speed": p.speed,
                "start_time": p.start_time,
            }
            for hid, p in world.human_paths.items()
        }
    return doc


def load_scene_file(path: str | Path) -> WorldState:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SceneError(f"scene file {path} is not valid JSON: {e}") from e
    return load_scene(doc)


def bundled_scene(name: str) -> WorldState:
    """Load a scene shipped with the package, e.g. 'two_tables'."""
    ref = resources.files("planguard").joinpath(f"data/scenes/{name}.json")
    if not ref.is_file():
        raise SceneError(f"no bundled scene named {name!r}")
    return load_scene(json.loads(ref.read_text(encoding="utf-8")))


def bundled_scene_path(name: str) -> Path:
    ref = resources.files("planguard").joinpath(f"data/scenes/{name}.json")
    if not ref.is_file():
        raise SceneError(f"no bundled scene named {name!r}")
    return Path(str(ref))


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise SceneError(f"{where} is missing required key {key!r}")
    return d[key]


def _parse_robot(d: dict) -> RobotState:
    rid = _require(d, "id", "robot")
    base = _require(d, "base", f"robot {rid!r}")
    if len(base) != 3:
        raise SceneError(f"robot {rid!r} base must be [x, y, theta]")
    ee = _require(d, "ee", f"robot {rid!r}")
    if len(ee) != 3:
        raise SceneError(f"robot {rid!r} ee must be [x, y, z]")
    caps = tuple(d.get("capabilities", ALL_CAPABILITIES))
    for c in caps:
        if c not in ALL_CAPABILITIES:
            raise SceneError(f"robot {rid!r} has unknown capability {c!r}")
    gripper = d.get("gripper", GRIPPER_OPEN)
    if gripper not in (GRIPPER_OPEN, GRIPPER_CLOSED):
        raise SceneError(f"robot {rid!r} gripper must be open or closed")
    safe = d.get("safe_position")
    return RobotState(
        id=rid,
        base=Pose2(*[float(v) for v in base]),
        ee_pos=np.asarray(ee, dtype=np.float64),
        base_vel=np.asarray(d.get("base_vel", [0.0, 0.0, 0.0]), dtype=np.float64),
        ee_vel=np.asarray(d.get("ee_vel", [0.0, 0.0, 0.0]), dtype=np.float64),
        gripper=gripper,
        held=d.get("held"),
        reach=float(d.get("reach", 1.5)),
        radius=float(d.get("radius", 0.2)),
        capabilities=caps,
        safe_position=tuple(safe) if safe is not None else None,
    )


def _parse_footprint(fp, where: str) -> dict:
    if not isinstance(fp, dict) or not ({"circle", "polygon"} & set(fp)):
        raise SceneError(f"{where} footprint must be {{'circle': r}} or {{'polygon': [[x,y],...]}}")
    if "circle" in fp:
        if float(fp["circle"]) <= 0:
            raise SceneError(f"{where} footprint circle radius must be positive")
        return {"circle": float(fp["circle"])}
    try:
        ConvexPolygon(fp["polygon"])
    except ValueError as e:
        raise SceneError(f"{where} footprint polygon invalid: {e}") from e
    return {"polygon": [[float(x), float(y)] for x, y in fp["polygon"]]}


def _parse_object(d: dict) -> ObjectState:
    oid = _require(d, "id", "object")
    pose = _require(d, "pose", f"object {oid!r}")
    if len(pose) != 3:
        raise SceneError(f"object {oid!r} pose must be [x, y, theta]")
    grasp = None
    if d.get("grasp"):
        g = d["grasp"]
        grasp = GraspSpec(
            point=np.asarray(g.get("point", [0, 0, 0]), dtype=np.float64),
            approach=np.asarray(g.get("approach", [0, 0, -1]), dtype=np.float64),
        )
    return ObjectState(
        id=oid,
        pose=Pose2(*[float(v) for v in pose]),
        height=float(_require(d, "height", f"object {oid!r}")),
        footprint=_parse_footprint(_require(d, "footprint", f"object {oid!r}"), f"object {oid!r}"),
        graspable=bool(d.get("graspable", False)),
        grasp=grasp,
    )


def _parse_human(d: dict) -> HumanState:
    hid = _require(d, "id", "human")
    pos = _require(d, "position", f"human {hid!r}")
    access = d.get("access", "non_technical")
    if access not in ACCESS_LEVELS:
        raise SceneError(f"human {hid!r} access must be one of {ACCESS_LEVELS}")
    return HumanState(
        id=hid,
        position=np.asarray(pos, dtype=np.float64),
        velocity=np.asarray(d.get("velocity", [0.0, 0.0]), dtype=np.float64),
        access=access,
    )


def _parse_static(d: dict) -> StaticEntity:
    sid = _require(d, "id", "static")
    kind = d.get("kind", "obstacle")
    if kind not in ("obstacle", "region"):
        raise SceneError(f"static {sid!r} kind must be obstacle or region")
    if "polygon" in d:
        try:
            shape = ConvexPolygon(d["polygon"])
        except ValueError as e:
            raise SceneError(f"static {sid!r} polygon invalid: {e}") from e
    elif "circle" in d:
        c = d["circle"]
        shape = Circle((float(c["center"][0]), float(c["center"][1])), float(c["radius"]))
    else:
        raise SceneError(f"static {sid!r} needs a polygon or circle")
    return StaticEntity(id=sid, shape=shape, kind=kind)
