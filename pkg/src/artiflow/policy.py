"""Flow-driven articulation policy: grasp selection then closed-loop execution."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import geom
from .camera import CameraModel, backproject, default_camera, render_depth
from .dynamics import DEFAULT_BREAK_ANGLE, ContactState, step_articulation
from .errors import (
    ContactError,
    ContactFailed,
    DegenerateGeometryError,
    EstimatorDegenerate,
)
from .flow import FlowField, flow_from_screw, gt_flow
from .geom import PointCloud
from .metrics import normalized_distance, success
from .model import ArticulatedObject, JointState, ScrewAxis, forward_kinematics, joint_screw

# -- flow estimators -----------------------------------------------------------


def _moving_mask(obj: ArticulatedObject, cloud: PointCloud, target_joint: str) -> np.ndarray:
    if cloud.part_mask is not None:
        return cloud.part_mask
    if cloud.link_labels is None:
        raise ValueError("cloud needs a part mask or link labels")
    return cloud.link_labels == obj.joints[target_joint].child_link


@dataclass(frozen=True)
class OracleGT:
    """Ground-truth flow from the object's kinematics."""

    kind = "oracle"

    def estimate(self, obj, state, cloud, target_joint, view_point=None) -> FlowField:
        return gt_flow(obj, state, cloud, target_joint)

    def contact_flow(self, obj, state, cloud, target_joint, view_point=None) -> FlowField:
        return self.estimate(obj, state, cloud, target_joint, view_point)

    def for_trial(self, seed: int) -> OracleGT:
        return self


@dataclass(frozen=True)
class NormalDirection:
    """Unit surface normals, oriented towards the camera, used as flow.

    Grasp selection uses ground-truth flow; only the motion direction comes
    from the normals.
    """

    k: int = geom.DEFAULT_K
    kind = "normal"

    def estimate(self, obj, state, cloud, target_joint, view_point=None) -> FlowField:
        mask = _moving_mask(obj, cloud, target_joint)
        vp = np.zeros(3) if view_point is None else view_point
        with_normals = geom.estimate_normals(cloud, self.k, vp, indices=np.flatnonzero(mask))
        vectors = np.where(with_normals.normal_valid[:, None], with_normals.normals, 0.0)
        return FlowField(vectors, target_joint)

    def contact_flow(self, obj, state, cloud, target_joint, view_point=None) -> FlowField:
        return gt_flow(obj, state, cloud, target_joint)

    def for_trial(self, seed: int) -> NormalDirection:
        return self


@dataclass(frozen=True)
class ScrewParameters:
    """Flow generated from a perturbed copy of the true joint screw.

    The axis direction is tilted by ``direction_error`` (radians) about a
    random perpendicular and the axis point shifted by ``origin_error``
    (meters) in a random direction. The perturbation is fixed by ``seed``.
    """

    direction_error: float = 0.0
    origin_error: float = 0.0
    seed: int = 0
    kind = "screw"

    def perturb(self, screw: ScrewAxis) -> ScrewAxis:
        if self.direction_error == 0 and self.origin_error == 0:
            return screw
        rng = np.random.default_rng(self.seed)
        d = screw.direction
        perp = rng.normal(size=3)
        perp -= (perp @ d) * d
        perp /= np.linalg.norm(perp)
        a = self.direction_error
        direction = np.cos(a) * d + np.sin(a) * np.cross(perp, d)
        shift = rng.normal(size=3)
        shift /= np.linalg.norm(shift)
        return ScrewAxis(screw.kind, direction, screw.origin + self.origin_error * shift)

    def estimate(self, obj, state, cloud, target_joint, view_point=None) -> FlowField:
        mask = _moving_mask(obj, cloud, target_joint)
        screw = self.perturb(joint_screw(obj, state, target_joint))
        return FlowField(flow_from_screw(cloud.points, mask, screw), target_joint)

    def contact_flow(self, obj, state, cloud, target_joint, view_point=None) -> FlowField:
        return self.estimate(obj, state, cloud, target_joint, view_point)

    def for_trial(self, seed: int) -> ScrewParameters:
        return replace(self, seed=seed)

    @property
    def label(self) -> str:
        return f"screw(dir={np.rad2deg(self.direction_error):g}deg,pos={self.origin_error:g}m)"


FlowEstimator = OracleGT | NormalDirection | ScrewParameters


def estimator_label(est: FlowEstimator) -> str:
    return getattr(est, "label", est.kind)


def estimate_flow(
    estimator: FlowEstimator,
    obj: ArticulatedObject,
    state: Mapping[str, float],
    cloud: PointCloud,
    target_joint: str,
    view_point=None,
) -> FlowField:
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    return estimator.estimate(obj, state, cloud, target_joint, view_point)


# -- grasp and direction selection -------------------------------------------------


@dataclass(frozen=True)
class GraspConstraints:
    edge_clearance: float = 0.02
    curvature_max: float = geom.DEFAULT_CURVATURE_MAX
    neighbor_k: int = geom.DEFAULT_K
    angle_gap_threshold: float = geom.DEFAULT_ANGLE_GAP

    def __post_init__(self):
        if not (self.edge_clearance > 0 and self.curvature_max > 0):
            raise ValueError("edge_clearance and curvature_max must be positive")


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    index: int
    position: np.ndarray
    flow_vector: np.ndarray


def feasible_contacts(
    cloud: PointCloud, constraints: GraspConstraints, edge_flags: np.ndarray, curvature: np.ndarray
) -> np.ndarray:
    """Points that are not edges, not too curved, and clear of any such point."""
    curvature = np.asarray(curvature, dtype=float)
    violating = np.asarray(edge_flags, dtype=bool) | ~(curvature <= constraints.curvature_max)
    feasible = ~violating
    if violating.any() and feasible.any():
        dist, _ = cKDTree(cloud.points[violating]).query(cloud.points[feasible], k=1)
        idx = np.flatnonzero(feasible)
        feasible[idx[dist <= constraints.edge_clearance]] = False
    return feasible


def select_contact(
    cloud: PointCloud,
    flow: FlowField,
    constraints: GraspConstraints,
    edge_flags: np.ndarray,
    curvature: np.ndarray,
) -> GraspCandidate:
    if len(flow) != len(cloud):
        raise ValueError("flow and cloud lengths differ")
    feasible = feasible_contacts(cloud, constraints, edge_flags, curvature)
    if not feasible.any():
        raise ContactFailed("no feasible grasp point")
    mags = np.where(feasible, flow.magnitudes, -np.inf)
    i = int(np.argmax(mags))
    return GraspCandidate(i, cloud.points[i].copy(), flow.vectors[i].copy())


def select_direction(
    cloud: PointCloud, flow: FlowField, contact_position, contact_radius: float
) -> np.ndarray:
    """Direction of the strongest flow vector within ``contact_radius`` of the contact.

    Magnitude ties (within 1e-9, e.g. unit-length normals or prismatic flow)
    go to the point closest to the contact.
    """
    d = np.linalg.norm(cloud.points - np.asarray(contact_position, dtype=float), axis=1)
    near = np.flatnonzero(d <= contact_radius)
    if len(near) == 0:
        raise EstimatorDegenerate("no observed points near the contact")
    mags = flow.magnitudes[near]
    top = mags.max()
    if top < 1e-6:
        raise EstimatorDegenerate("flow near the contact is ~zero")
    tied = np.flatnonzero(mags >= top - 1e-9)
    best = tied[np.argmin(d[near[tied]])]
    return flow.vectors[near[best]] / mags[best]


# -- observation ---------------------------------------------------------------


@dataclass(frozen=True)
class FullObservation:
    """Area-uniform samples of every link surface (no occlusion)."""

    n_points: int = 20000
    name = "full"


@dataclass(frozen=True)
class CameraObservation:
    """Rendered depth-camera cloud; ``camera=None`` uses the object's default view."""

    camera: CameraModel | None = None
    stride: int = 1
    name = "camera"


Observation = FullObservation | CameraObservation


def observe(
    obj: ArticulatedObject,
    state: Mapping[str, float],
    target_joint: str,
    mode: Observation,
    seed: int = 0,
) -> tuple[PointCloud, np.ndarray]:
    """Labelled, part-masked cloud and the view point used to orient normals."""
    child = obj.joints[target_joint].child_link
    if isinstance(mode, CameraObservation):
        cam = mode.camera or default_camera(obj)
        cloud = backproject(render_depth(obj, state, cam), cam, mode.stride)
        view = cam.position
    else:
        cloud = geom.sample_surface(obj, state, mode.n_points, seed)
        view = default_camera(obj).position
    if len(cloud) == 0:
        return cloud, view
    return cloud.with_mask_for(child), view


# -- rollout -------------------------------------------------------------------


class Termination(str, enum.Enum):
    SUCCESS = "Success"
    MAX_STEPS = "MaxSteps"
    CONTACT_LOST = "ContactLost"
    CONTACT_FAILED = "ContactFailed"
    ESTIMATOR_DEGENERATE = "EstimatorDegenerate"
    LOAD_FAILED = "LoadFailed"


@dataclass(frozen=True)
class RolloutConfig:
    max_steps: int = 50
    step_size: float = 0.01
    success_threshold: float = 0.1
    contact_radius: float = 0.05
    break_angle: float = float(DEFAULT_BREAK_ANGLE)
    grasp: GraspConstraints = field(default_factory=GraspConstraints)

    def __post_init__(self):
        if not (self.max_steps > 0 and self.step_size > 0 and self.contact_radius > 0 and self.break_angle > 0):
            raise ValueError("rollout parameters must be positive")
        if not 0 < self.success_threshold < 1:
            raise ValueError("success_threshold must lie in (0, 1)")


@dataclass
class RolloutResult:
    states: list[JointState]
    target_joint: str
    e_goal: float
    success: bool
    steps_used: int
    termination: Termination
    contact_index: int | None = None
    detail: str = ""

    def to_record(self) -> dict:
        return {
            "target_joint": self.target_joint,
            "e_goal": self.e_goal,
            "success": self.success,
            "steps_used": self.steps_used,
            "termination": self.termination.value,
            "contact_index": self.contact_index,
            "final_q": self.states[-1][self.target_joint] if self.states else None,
            "detail": self.detail,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


StepCallback = Callable[[int, PointCloud, FlowField, JointState], None]


def rollout(
    obj: ArticulatedObject,
    initial_state: Mapping[str, float] | None,
    target_joint: str,
    estimator: FlowEstimator,
    observation: Observation = FullObservation(),
    config: RolloutConfig = RolloutConfig(),
    seed: int = 0,
    on_step: StepCallback | None = None,
) -> RolloutResult:
    """Run grasp selection then closed-loop articulation until termination.

    Failures inside the loop end the episode with a termination reason
    instead of raising.
    """
    joint = obj.joints[target_joint]
    if not joint.range > 0:
        raise ValueError(f"joint {target_joint!r} has zero range")
    state = JointState(initial_state) if initial_state is not None else obj.closed_state()
    obj.check_state(state)
    q_init, q_goal = state[target_joint], joint.limits[1]
    states = [state]

    def finish(term: Termination, contact_index=None, detail="") -> RolloutResult:
        e = normalized_distance(q_init, states[-1][target_joint], q_goal)
        ok = success(e, config.success_threshold)
        if term is Termination.SUCCESS and not ok:
            term = Termination.MAX_STEPS
        return RolloutResult(
            states, target_joint, e, ok, len(states) - 1, term, contact_index, detail
        )

    # grasp selection
    cloud, view = observe(obj, state, target_joint, observation, seed)
    g = config.grasp
    if len(cloud) <= max(g.neighbor_k, 6):
        return finish(Termination.CONTACT_FAILED, detail="observation too sparse")
    try:
        contact_field = estimator.contact_flow(obj, state, cloud, target_joint, view)
        frames = geom.local_frames(cloud.points, g.neighbor_k)
        edges = geom.detect_edges(cloud, g.neighbor_k, g.angle_gap_threshold, frames=frames)
        curvature = geom.estimate_gaussian_curvature(cloud, g.neighbor_k, frames=frames)
        cand = select_contact(cloud, contact_field, g, edges, curvature)
    except ContactFailed as exc:
        return finish(Termination.CONTACT_FAILED, detail=str(exc))
    except (DegenerateGeometryError, EstimatorDegenerate) as exc:
        return finish(Termination.ESTIMATOR_DEGENERATE, detail=str(exc))
    link = str(cloud.link_labels[cand.index])
    if link != joint.child_link:
        return finish(Termination.CONTACT_FAILED, cand.index, f"grasp landed on {link!r}")
    local = forward_kinematics(obj, state)[link].inverse().apply(cand.position)
    contact = ContactState(True, local, link)

    # articulation execution
    for step in range(1, config.max_steps + 1):
        if step > 1:
            cloud, view = observe(obj, state, target_joint, observation, seed)
        try:
            if len(cloud) == 0:
                raise EstimatorDegenerate("empty observation")
            flow = estimate_flow(estimator, obj, state, cloud, target_joint, view)
            if on_step is not None:
                on_step(step, cloud, flow, state)
            contact_pos = forward_kinematics(obj, state)[link].apply(contact.contact_point_local)
            direction = select_direction(cloud, flow, contact_pos, config.contact_radius)
        except (EstimatorDegenerate, DegenerateGeometryError, ValueError) as exc:
            return finish(Termination.ESTIMATOR_DEGENERATE, cand.index, str(exc))
        try:
            new_state, contact = step_articulation(
                obj, state, target_joint, contact, config.step_size * direction, config.break_angle
            )
        except ContactError as exc:
            return finish(Termination.CONTACT_LOST, cand.index, str(exc))
        if not contact.attached:
            return finish(Termination.CONTACT_LOST, cand.index, "contact broke")
        state = new_state
        states.append(state)
        e = normalized_distance(q_init, state[target_joint], q_goal)
        if success(e, config.success_threshold):
            return finish(Termination.SUCCESS, cand.index)
    return finish(Termination.MAX_STEPS, cand.index)


def movable_joints(obj: ArticulatedObject) -> Sequence[str]:
    return sorted(obj.joints)


