"""Articulation flow for articulated objects: kinematics, ground-truth flow,
force analysis, depth rendering, a flow-following policy and its evaluation."""

from .errors import (
    ArtiflowError,
    ContactError,
    ContactFailed,
    DegenerateGeometryError,
    EstimatorDegenerate,
    SceneError,
    SceneParseError,
    StateError,
)
from .flow import FlowField, fd_flow_oracle, flow_error, gt_flow
from .geom import PointCloud, detect_edges, estimate_gaussian_curvature, estimate_normals, sample_surface
from .metrics import normalized_distance, success
from .model import (
    ArticulatedObject,
    JointKind,
    JointSpec,
    JointState,
    LinkSpec,
    Mesh,
    forward_kinematics,
    joint_screw,
)
from .scene_io import load_scene, parse_scene, serialize_scene
from .transforms import Pose
from .urdf import import_urdf_subset

__version__ = "0.1.0"

__all__ = [
    "ArtiflowError",
    "ContactError",
    "ContactFailed",
    "DegenerateGeometryError",
    "EstimatorDegenerate",
    "SceneError",
    "SceneParseError",
    "StateError",
    "FlowField",
    "fd_flow_oracle",
    "flow_error",
    "gt_flow",
    "PointCloud",
    "detect_edges",
    "estimate_gaussian_curvature",
    "estimate_normals",
    "sample_surface",
    "normalized_distance",
    "success",
    "ArticulatedObject",
    "JointKind",
    "JointSpec",
    "JointState",
    "LinkSpec",
    "Mesh",
    "forward_kinematics",
    "joint_screw",
    "load_scene",
    "parse_scene",
    "serialize_scene",
    "Pose",
    "import_urdf_subset",
]
