from __future__ import annotations

import numpy as np
import pytest

from planguard.world import (
    GraspSpec,
    HumanState,
    ObjectState,
    Pose2,
    RobotState,
    StaticEntity,
    WorldState,
)
from planguard.geometry import ConvexPolygon


def make_robot(rid="robot_1", base=(0.0, 0.0, 0.0), ee=(0.0, 0.0, 0.9), **kw) -> RobotState:
    return RobotState(
        id=rid,
        base=Pose2(*base),
        ee_pos=np.asarray(ee, dtype=np.float64),
        **kw,
    )


def make_can(oid="can", pose=(0.05, 1.1, 0.0), height=1.1) -> ObjectState:
    return ObjectState(
        id=oid,
        pose=Pose2(*pose),
        height=height,
        footprint={"circle": 0.04},
        graspable=True,
        grasp=GraspSpec(point=np.array([0.0, 0.0, 0.0]), approach=np.array([0.0, 0.0, -1.0])),
    )


def make_table(oid="table_a", pose=(0.0, 1.2, 0.0), height=1.0) -> ObjectState:
    return ObjectState(
        id=oid,
        pose=Pose2(*pose),
        height=height,
        footprint={"polygon": [[-0.25, -0.2], [0.25, -0.2], [0.25, 0.2], [-0.25, 0.2]]},
    )


def make_human(hid="user_1", position=(-2.0, 3.0), access="non_technical") -> HumanState:
    return HumanState(
        id=hid,
        position=np.asarray(position, dtype=np.float64),
        velocity=np.zeros(2),
        access=access,
    )


def make_region(sid="workspace", bounds=(-4.0, -2.0, 5.0, 5.0)) -> StaticEntity:
    x0, y0, x1, y1 = bounds
    return StaticEntity(
        id=sid,
        shape=ConvexPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)]),
        kind="region",
    )


@pytest.fixture
def simple_world() -> WorldState:
    return WorldState(
        robots=[make_robot()],
        objects=[make_table(), make_can()],
        humans=[make_human()],
        statics=[make_region()],
    )


@pytest.fixture
def two_robot_world() -> WorldState:
    return WorldState(
        robots=[
            make_robot("robot_1", base=(0.0, 0.0, 0.0), safe_position=(-1.2, 0.0)),
            make_robot("robot_2", base=(2.0, 2.8, -1.5707963267948966), safe_position=(3.4, 2.8)),
        ],
        objects=[
            make_table("table_a", pose=(0.0, 1.2, 0.0)),
            make_table("table_b", pose=(2.0, 1.2, 0.0)),
            make_can(),
        ],
        humans=[make_human(), make_human("user_2", position=(3.0, 0.9), access="technical")],
        statics=[make_region()],
    )
