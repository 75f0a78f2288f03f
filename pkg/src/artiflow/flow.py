"""Ground-truth articulation flow, its finite-difference oracle, and error metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DegenerateGeometryError, StateError
from .geom import PointCloud
from .model import ArticulatedObject, JointKind, ScrewAxis, joint_screw

AXIS_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class FlowField:
    vectors: np.ndarray
    target_joint: str

    def __post_init__(self):
        object.__setattr__(self, "vectors", np.asarray(self.vectors, dtype=float).reshape(-1, 3))

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)


@dataclass(frozen=True)
class FlowErrorReport:
    mean_l2: float
    max_l2: float
    mean_cosine_distance: float
    averaging: str = "per-point"


def _child_mask(obj: ArticulatedObject, cloud: PointCloud, target_joint: str) -> np.ndarray:
    if target_joint not in obj.joints:
        raise KeyError(f"unknown joint id {target_joint!r}")
    if cloud.link_labels is None:
        raise ValueError("cloud needs link labels")
    unknown = set(np.unique(cloud.link_labels)) - set(obj.links)
    if unknown:
        raise ValueError(f"cloud labels reference unknown links {sorted(unknown)}")
    return cloud.link_labels == obj.joints[target_joint].child_link


def flow_from_screw(points: np.ndarray, moving: np.ndarray, screw: ScrewAxis) -> np.ndarray:
    """Per-point flow for the ``moving`` points under a single screw axis.

    Prismatic points move along the unit axis; revolute points get
    ``omega x r`` scaled so the largest moving radius has unit length.
    """
    out = np.zeros((len(points), 3))
    if not moving.any():
        return out
    if screw.kind is JointKind.PRISMATIC:
        out[moving] = screw.direction
        return out
    omega = screw.direction
    rel = points[moving] - screw.origin
    r = rel - np.outer(rel @ omega, omega)
    tangent = np.cross(omega, r)
    r_max = np.linalg.norm(tangent, axis=1).max()
    if r_max < AXIS_EPS:
        raise DegenerateGeometryError("all moving points lie on the rotation axis")
    out[moving] = tangent / r_max
    return out


def gt_flow(
    obj: ArticulatedObject,
    state: Mapping[str, float],
    cloud: PointCloud,
    target_joint: str,
) -> FlowField:
    moving = _child_mask(obj, cloud, target_joint)
    screw = joint_screw(obj, state, target_joint)
    return FlowField(flow_from_screw(cloud.points, moving, screw), target_joint)


# -- finite-difference oracle ------------------------------------------------
# Works straight from the definition (displacement under a small joint
# increment) with its own homogeneous-matrix chain in extended precision, so
# it shares no arithmetic with gt_flow or forward_kinematics.

def _rot_matrix(axis, angle, dtype) -> np.ndarray:
    a = np.asarray(axis, dtype=dtype)
    a = a / np.sqrt(np.sum(a * a))
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]], dtype=dtype)
    angle = dtype(angle)
    return np.eye(3, dtype=dtype) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def _quat_matrix(q, dtype) -> np.ndarray:
    x, y, z, w = (dtype(c) for c in q)
    n = np.sqrt(x * x + y * y + z * z + w * w)
    x, y, z, w = x / n, y / n, z / n, w / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ],
        dtype=dtype,
    )


def _homogeneous(rot, trans, dtype) -> np.ndarray:
    m = np.eye(4, dtype=dtype)
    m[:3, :3] = rot
    m[:3, 3] = np.asarray(trans, dtype=dtype)
    return m


def matrix_chain_fk(obj: ArticulatedObject, state: Mapping[str, float], dtype=np.longdouble):
    """Link-to-world 4x4 matrices by explicit matrix products."""
    mats = {obj.root_link: np.eye(4, dtype=dtype)}
    pending = list(obj.joints.values())
    while pending:
        rest = []
        for j in pending:
            if j.parent_link not in mats:
                rest.append(j)
                continue
            origin = _homogeneous(_quat_matrix(j.origin.rotation, dtype), j.origin.translation, dtype)
            q = dtype(state[j.id])
            if j.kind is JointKind.PRISMATIC:
                motion = _homogeneous(np.eye(3, dtype=dtype), np.asarray(j.axis, dtype=dtype) * q, dtype)
            else:
                motion = _homogeneous(_rot_matrix(j.axis, q, dtype), np.zeros(3), dtype)
            mats[j.child_link] = mats[j.parent_link] @ origin @ motion
        if len(rest) == len(pending):
            raise ValueError("joint tree is not connected to the root")
        pending = rest
    return mats


def _rigid_inverse(m: np.ndarray) -> np.ndarray:
    inv = np.eye(4, dtype=m.dtype)
    inv[:3, :3] = m[:3, :3].T
    inv[:3, 3] = -(m[:3, :3].T @ m[:3, 3])
    return inv


def fd_flow_oracle(
    obj: ArticulatedObject,
    state: Mapping[str, float],
    cloud: PointCloud,
    target_joint: str,
    delta_theta: float = 1e-6,
) -> FlowField:
    moving = _child_mask(obj, cloud, target_joint)
    if delta_theta == 0:
        raise DegenerateGeometryError("delta_theta must be nonzero")
    delta = abs(float(delta_theta))
    joint = obj.joints[target_joint]
    lo, hi = joint.limits
    if not hi > lo:
        raise StateError(f"joint {target_joint!r} has zero range")
    q = state[target_joint]
    if q + delta <= hi:
        q_a, q_b = q, q + delta
    elif q - delta >= lo:
        q_a, q_b = q - delta, q
    else:
        raise StateError(f"joint {target_joint!r} range is smaller than delta_theta")

    dt = np.longdouble
    out = np.zeros((len(cloud.points), 3))
    if not moving.any():
        return FlowField(out, target_joint)
    now = matrix_chain_fk(obj, state, dt)
    link = joint.child_link
    pts = np.asarray(cloud.points[moving], dtype=dt)
    homog = np.concatenate([pts, np.ones((len(pts), 1), dtype=dt)], axis=1)
    local = homog @ _rigid_inverse(now[link]).T
    before = matrix_chain_fk(obj, dict(state, **{target_joint: q_a}), dt)[link]
    after = matrix_chain_fk(obj, dict(state, **{target_joint: q_b}), dt)[link]
    disp = (local @ after.T - local @ before.T)[:, :3]
    scale = np.sqrt((disp * disp).sum(axis=1)).max()
    if not scale > 0:
        raise DegenerateGeometryError("no target point moves under the joint increment")
    out[moving] = np.asarray(disp / scale, dtype=float)
    return FlowField(out, target_joint)


def flow_error(pred: FlowField, gt: FlowField) -> FlowErrorReport:
    """Per-point L2 and cosine errors between two fields over the same points."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gt)}")
    if len(gt) == 0:
        return FlowErrorReport(0.0, 0.0, 0.0)
    l2 = np.linalg.norm(pred.vectors - gt.vectors, axis=1)
    gt_norm = gt.magnitudes
    pred_norm = pred.magnitudes
    sel = gt_norm > 1e-6
    if sel.any():
        # 1 - cos written as half the squared distance between unit vectors,
        # which is exactly zero for identical directions
        g = gt.vectors[sel] / gt_norm[sel, None]
        pn = pred_norm[sel]
        moving = pn > 0
        p = np.zeros_like(g)
        p[moving] = pred.vectors[sel][moving] / pn[moving, None]
        dist = np.where(moving, 0.5 * np.sum((p - g) ** 2, axis=1), 1.0)
        cos_dist = float(np.mean(dist))
    else:
        cos_dist = 0.0
    return FlowErrorReport(float(l2.mean()), float(l2.max()), cos_dist)


@dataclass(frozen=True)
class FlowDeviation:
    max_angle: float
    max_relative_magnitude: float
    max_abs: float


def flow_deviation(reference: FlowField, other: FlowField, min_norm: float = 1e-9) -> FlowDeviation:
    """Worst-case direction/magnitude disagreement between two fields."""
    a, b = reference.vectors, other.vectors
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    sel = na > min_norm
    if sel.any():
        cross = np.linalg.norm(np.cross(a[sel], b[sel]), axis=1)
        dot = np.einsum("ij,ij->i", a[sel], b[sel])
        angle = float(np.arctan2(cross, dot).max())
        rel = float((np.abs(nb[sel] - na[sel]) / na[sel]).max())
    else:
        angle = rel = 0.0
    max_abs = float(np.abs(a - b).max()) if len(a) else 0.0
    return FlowDeviation(angle, rel, max_abs)
