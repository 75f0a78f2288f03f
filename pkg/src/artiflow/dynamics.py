"""Idealized force analysis for 1-DoF joints and the quasi-static articulation step."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import ContactError, DegenerateGeometryError
from .geom import PointCloud
from .model import ArticulatedObject, JointKind, JointState, forward_kinematics, joint_screw

UNIT_TOL = 1e-9
DEFAULT_BREAK_ANGLE = np.deg2rad(60.0)


def _require_unit(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} must be a unit vector")
    return v


def net_force_prismatic(force, v) -> np.ndarray:
    """Component of ``force`` along the slide direction ``v``.

    ``force`` may be a single 3-vector or an (N, 3) batch.
    """
    v = _require_unit(v, "v")
    force = np.asarray(force, dtype=float)
    return (force @ v)[..., None] * v


def net_force_revolute(force, r, omega) -> np.ndarray:
    """Force left after the hinge resists radial and axial components.

    ``force`` may be a single 3-vector or an (N, 3) batch.
    """
    omega = _require_unit(omega, "omega")
    force = np.asarray(force, dtype=float)
    r = np.asarray(r, dtype=float)
    rr = r @ r
    if rr < 1e-18:
        raise DegenerateGeometryError("point lies on the rotation axis")
    return force - (force @ r / rr)[..., None] * r - (force @ omega)[..., None] * omega


@dataclass(frozen=True, eq=False)
class AppliedForce:
    point: np.ndarray
    force: np.ndarray


@dataclass(frozen=True, eq=False)
class ContactState:
    attached: bool
    contact_point_local: np.ndarray
    link_id: str
    break_angle: float = 0.0

    def __post_init__(self):
        if self.break_angle < 0:
            raise ValueError("break_angle must be non-negative")


def radius_vectors(points: np.ndarray, origin: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Perpendicular vectors from the axis line to each point."""
    rel = np.asarray(points, dtype=float) - origin
    return rel - np.outer(rel @ omega, omega) if rel.ndim == 2 else rel - (rel @ omega) * omega


def optimal_contact(
    obj: ArticulatedObject,
    state: Mapping[str, float],
    cloud: PointCloud,
    target_joint: str,
    force_budget: float = 1.0,
) -> tuple[int, np.ndarray]:
    """Contact index and force maximizing the child link's acceleration."""
    if cloud.link_labels is None:
        raise ValueError("cloud needs link labels")
    child = obj.joints[target_joint].child_link
    idx = np.flatnonzero(cloud.link_labels == child)
    if len(idx) == 0:
        raise ValueError(f"no sampled points on child link {child!r}")
    screw = joint_screw(obj, state, target_joint)
    if screw.kind is JointKind.PRISMATIC:
        return int(idx[0]), force_budget * screw.direction
    r = radius_vectors(cloud.points[idx], screw.origin, screw.direction)
    radii = np.linalg.norm(r, axis=1)
    best = int(np.argmax(radii))
    if radii[best] < 1e-9:
        raise DegenerateGeometryError("all child points lie on the rotation axis")
    tangent = np.cross(screw.direction, r[best])
    return int(idx[best]), force_budget * tangent / np.linalg.norm(tangent)


def feasible_direction(
    obj: ArticulatedObject, state: Mapping[str, float], target_joint: str, contact: ContactState
) -> tuple[np.ndarray, float]:
    """Unit direction the contact point can move in, and its lever arm.

    The lever arm is 1 for prismatic joints and ``|r|`` for revolute ones.
    """
    joint = obj.joints[target_joint]
    if contact.link_id != joint.child_link:
        raise ContactError(
            f"contact is on link {contact.link_id!r}, not on child link {joint.child_link!r}"
        )
    screw = joint_screw(obj, state, target_joint)
    if screw.kind is JointKind.PRISMATIC:
        return screw.direction, 1.0
    world = forward_kinematics(obj, state)[joint.child_link].apply(contact.contact_point_local)
    r = radius_vectors(world, screw.origin, screw.direction)
    radius = float(np.linalg.norm(r))
    if radius < 1e-9:
        raise ContactError("contact point lies on the rotation axis")
    return np.cross(screw.direction, r) / radius, radius


def step_articulation(
    obj: ArticulatedObject,
    state: JointState,
    target_joint: str,
    contact: ContactState,
    commanded_displacement,
    break_angle: float = DEFAULT_BREAK_ANGLE,
) -> tuple[JointState, ContactState]:
    """Advance the target joint by projecting a gripper displacement onto it.

    If the displacement deviates from the feasible direction by more than
    ``break_angle`` the contact detaches and the state is left unchanged.
    """
    if not contact.attached:
        raise ContactError("contact is not attached")
    dx = np.asarray(commanded_displacement, dtype=float)
    direction, lever = feasible_direction(obj, state, target_joint, contact)
    norm = np.linalg.norm(dx)
    if norm == 0:
        return state, contact
    deviation = float(np.arccos(np.clip(dx @ direction / norm, -1.0, 1.0)))
    if deviation > break_angle:
        return state, replace(contact, attached=False, break_angle=contact.break_angle + deviation)
    lo, hi = obj.joints[target_joint].limits
    q = float(np.clip(state[target_joint] + (dx @ direction) / lever, lo, hi))
    return state.with_value(target_joint, q), replace(
        contact, break_angle=contact.break_angle + deviation
    )
