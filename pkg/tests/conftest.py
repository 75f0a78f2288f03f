import numpy as np
import pytest

from artiflow.model import ArticulatedObject, JointKind, JointSpec, LinkSpec, box_mesh
from artiflow.transforms import Pose


def make_door(width=0.4, height=0.6, thickness=0.02, hinge=(0.0, 0.0, 0.0), limits=(0.0, np.pi / 2)):
    """Static frame plus a panel whose hinge (world z) runs along one panel edge."""
    base = LinkSpec.box("frame", (0.3, 0.3, 0.3))
    panel = LinkSpec("door", box_mesh((width, thickness, height), center=(width / 2, -thickness / 2, 0.0)))
    joint = JointSpec("hinge", JointKind.REVOLUTE, "frame", "door", Pose(hinge), (0, 0, 1), limits)
    return ArticulatedObject([base, panel], [joint], "frame", name="door", category="door")


def make_drawer(travel=0.4, axis=(1.0, 0.0, 0.0)):
    base = LinkSpec.box("body", (0.5, 0.5, 0.5))
    drawer = LinkSpec.box("drawer", (0.4, 0.4, 0.2))
    joint = JointSpec("slide", JointKind.PRISMATIC, "body", "drawer", Pose((0.1, 0, 0)), axis, (0.0, travel))
    return ArticulatedObject([base, drawer], [joint], "body", name="drawer", category="drawer")


def random_pose(rng):
    q = rng.normal(size=4)
    return Pose(rng.uniform(-1, 1, 3), q / np.linalg.norm(q))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def door():
    return make_door()


@pytest.fixture
def drawer():
    return make_drawer()
