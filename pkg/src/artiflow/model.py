"""Kinematic tree model: links, 1-DoF joints, joint states, forward kinematics."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import SceneError, StateError
from .transforms import Pose, quat_from_axis_angle

AXIS_NORMALIZE_TOL = 1e-6


class JointKind(str, enum.Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) < 1:
            raise SceneError("mesh has no triangles")
        if f.min() < 0 or f.max() >= len(v):
            raise SceneError("mesh triangle index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner positions."""
        return self.vertices[self.faces]

    def triangle_areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def transformed(self, pose: Pose, scale: float = 1.0) -> Mesh:
        return Mesh(pose.apply(self.vertices * scale), self.faces)

    @staticmethod
    def concatenate(meshes: Iterable[Mesh]) -> Mesh:
        verts, faces, offset = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            faces.append(m.faces + offset)
            offset += len(m.vertices)
        return Mesh(np.concatenate(verts), np.concatenate(faces))


def box_mesh(extents, center=(0.0, 0.0, 0.0)) -> Mesh:
    """Closed box with outward-facing (counter-clockwise) triangles."""
    ex, ey, ez = (0.5 * float(e) for e in extents)
    cx, cy, cz = center
    v = np.array(
        [
            [-ex, -ey, -ez], [ex, -ey, -ez], [ex, ey, -ez], [-ex, ey, -ez],
            [-ex, -ey, ez], [ex, -ey, ez], [ex, ey, ez], [-ex, ey, ez],
        ]
    ) + np.array([cx, cy, cz])
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ]
    )
    return Mesh(v, f)


@dataclass(frozen=True, eq=False)
class LinkSpec:
    """A rigid link. Geometry is either a box primitive or a triangle mesh.

    ``mesh_path`` only records where a mesh came from so the native format
    can refer back to it; geometry always lives in ``mesh``.
    """

    id: str
    mesh: Mesh
    box_extents: tuple[float, float, float] | None = None
    mesh_path: str | None = None
    mass: float = 1.0

    @classmethod
    def box(cls, id: str, extents, mass: float = 1.0) -> LinkSpec:
        extents = tuple(float(e) for e in extents)
        if len(extents) != 3 or min(extents) <= 0:
            raise SceneError(f"link {id!r}: box extents must be three positive numbers")
        return cls(id, box_mesh(extents), box_extents=extents, mass=mass)

    def area(self) -> float:
        return float(self.mesh.triangle_areas().sum())


@dataclass(frozen=True, eq=False)
class JointSpec:
    id: str
    kind: JointKind
    parent_link: str
    child_link: str
    origin: Pose
    axis: np.ndarray
    limits: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "kind", JointKind(self.kind))
        if self.parent_link == self.child_link:
            raise SceneError(f"joint {self.id!r}: self-loop joint")
        axis = np.array(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > AXIS_NORMALIZE_TOL:
            raise SceneError(f"joint {self.id!r}: axis is not unit length (norm {n:.9g})")
        axis = axis / n
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        lo, hi = (float(x) for x in self.limits)
        if not lo < hi:
            raise SceneError(f"joint {self.id!r}: limits must satisfy lower < upper")
        object.__setattr__(self, "limits", (lo, hi))

    @property
    def range(self) -> float:
        return self.limits[1] - self.limits[0]

    def motion(self, q: float) -> Pose:
        """Pose of the child frame relative to the joint frame at configuration q."""
        if self.kind is JointKind.PRISMATIC:
            return Pose(q * self.axis)
        return Pose(np.zeros(3), quat_from_axis_angle(self.axis, q))


@dataclass(frozen=True, eq=False)
class ScrewAxis:
    kind: JointKind
    direction: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        d = np.array(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            d = d / n
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "origin", np.array(self.origin, dtype=float).reshape(3))


class JointState(Mapping[str, float]):
    """Immutable map from joint id to scalar configuration."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, float]):
        self._values = MappingProxyType({str(k): float(v) for k, v in values.items()})

    def __getitem__(self, key: str) -> float:
        return self._values[key]

    def __reduce__(self):
        return (JointState, (dict(self._values),))

    def __iter__(self):
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"JointState({dict(self._values)!r})"

    def __eq__(self, other) -> bool:
        if isinstance(other, JointState):
            return dict(self._values) == dict(other._values)
        return NotImplemented

    def __hash__(self):
        return hash(tuple(sorted(self._values.items())))

    def replace(self, **values: float) -> JointState:
        merged = dict(self._values)
        merged.update(values)
        return JointState(merged)

    def with_value(self, joint_id: str, q: float) -> JointState:
        merged = dict(self._values)
        merged[joint_id] = q
        return JointState(merged)


@dataclass(frozen=True, eq=False)
class ArticulatedObject:
    links: Mapping[str, LinkSpec]
    joints: Mapping[str, JointSpec]
    root_link: str
    name: str = "object"
    category: str = "uncategorized"
    _order: tuple[str, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        links = self.links
        joints = self.joints
        if not isinstance(links, Mapping):
            links = _unique_map(links, "link")
        if not isinstance(joints, Mapping):
            joints = _unique_map(joints, "joint")
        object.__setattr__(self, "links", dict(links))
        object.__setattr__(self, "joints", dict(joints))
        object.__setattr__(self, "_order", self._validate())

    def _validate(self) -> tuple[str, ...]:
        if self.root_link not in self.links:
            raise SceneError(f"root link {self.root_link!r} is not defined")
        parent_of: dict[str, str] = {}
        children: dict[str, list[str]] = {lid: [] for lid in self.links}
        for j in self.joints.values():
            for lid in (j.parent_link, j.child_link):
                if lid not in self.links:
                    raise SceneError(f"joint {j.id!r} references dangling link {lid!r}")
            if j.child_link == self.root_link:
                raise SceneError(f"joint {j.id!r}: root link cannot be a joint child")
            if j.child_link in parent_of:
                raise SceneError(f"link {j.child_link!r} has more than one parent joint")
            parent_of[j.child_link] = j.id
            children[j.parent_link].append(j.id)
        order: list[str] = []
        stack = [self.root_link]
        seen = {self.root_link}
        while stack:
            lid = stack.pop()
            for jid in reversed(children[lid]):
                child = self.joints[jid].child_link
                order.append(jid)
                seen.add(child)
                stack.append(child)
        if len(seen) != len(self.links):
            missing = sorted(set(self.links) - seen)
            raise SceneError(f"kinematic cycle or disconnected links: {missing}")
        return tuple(order)

    @property
    def joint_order(self) -> tuple[str, ...]:
        """Joint ids in parent-before-child order."""
        return self._order

    def parent_joint(self, link_id: str) -> JointSpec | None:
        for j in self.joints.values():
            if j.child_link == link_id:
                return j
        return None

    def closed_state(self) -> JointState:
        return JointState({jid: j.limits[0] for jid, j in self.joints.items()})

    def check_state(self, state: Mapping[str, float]) -> None:
        if set(state) != set(self.joints):
            raise StateError(
                f"state keys {sorted(state)} do not match joints {sorted(self.joints)}"
            )
        for jid, j in self.joints.items():
            q = state[jid]
            lo, hi = j.limits
            if not (lo - 1e-12 <= q <= hi + 1e-12):
                raise StateError(f"joint {jid!r}: q={q} outside limits [{lo}, {hi}]")

    def random_state(self, rng: np.random.Generator) -> JointState:
        return JointState(
            {jid: float(rng.uniform(*self.joints[jid].limits)) for jid in sorted(self.joints)}
        )

    def subtree(self, link_id: str) -> ArticulatedObject:
        """The subtree rooted at ``link_id`` as a standalone object."""
        keep = {link_id}
        joints = []
        for jid in self._order:
            j = self.joints[jid]
            if j.parent_link in keep:
                keep.add(j.child_link)
                joints.append(j)
        return ArticulatedObject(
            {lid: l for lid, l in self.links.items() if lid in keep},
            {j.id: j for j in joints},
            link_id,
            name=f"{self.name}/{link_id}",
            category=self.category,
        )


def _unique_map(items, what: str) -> dict:
    out = {}
    for item in items:
        if item.id in out:
            raise SceneError(f"duplicate {what} id {item.id!r}")
        out[item.id] = item
    return out


def forward_kinematics(obj: ArticulatedObject, state: Mapping[str, float]) -> dict[str, Pose]:
    """World pose of every link. The root link frame is the world frame."""
    obj.check_state(state)
    poses = {obj.root_link: Pose.identity()}
    for jid in obj.joint_order:
        j = obj.joints[jid]
        poses[j.child_link] = poses[j.parent_link] @ j.origin @ j.motion(state[jid])
    return poses


def joint_frame(obj: ArticulatedObject, state: Mapping[str, float], joint_id: str) -> Pose:
    """World pose of a joint frame (parent pose composed with the static origin)."""
    if joint_id not in obj.joints:
        raise KeyError(f"unknown joint id {joint_id!r}")
    j = obj.joints[joint_id]
    return forward_kinematics(obj, state)[j.parent_link] @ j.origin


def joint_screw(obj: ArticulatedObject, state: Mapping[str, float], joint_id: str) -> ScrewAxis:
    frame = joint_frame(obj, state, joint_id)
    j = obj.joints[joint_id]
    return ScrewAxis(j.kind, frame.apply_vector(j.axis), frame.translation)


def transform_object(obj: ArticulatedObject, pose: Pose, scale: float = 1.0) -> ArticulatedObject:
    """Re-express an object under a world similarity transform.

    Root geometry and the origins of joints leaving the root are mapped by
    ``pose``; every length (vertices, origin offsets, prismatic limits) is
    multiplied by ``scale``.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    links = {}
    for lid, link in obj.links.items():
        place = pose if lid == obj.root_link else Pose.identity()
        extents = None if link.box_extents is None else tuple(e * scale for e in link.box_extents)
        links[lid] = replace(
            link,
            mesh=link.mesh.transformed(place, scale),
            box_extents=extents if lid != obj.root_link or _is_identity(pose) else None,
            mesh_path=None,
        )
    joints = {}
    for jid, j in obj.joints.items():
        origin = Pose(j.origin.translation * scale, j.origin.rotation)
        if j.parent_link == obj.root_link:
            origin = pose @ origin
        limits = j.limits
        if j.kind is JointKind.PRISMATIC:
            limits = (limits[0] * scale, limits[1] * scale)
        joints[jid] = replace(j, origin=origin, limits=limits)
    return ArticulatedObject(links, joints, obj.root_link, name=obj.name, category=obj.category)


def _is_identity(pose: Pose) -> bool:
    return pose.allclose(Pose.identity(), atol=0.0)


def scale_state(obj: ArticulatedObject, state: Mapping[str, float], scale: float) -> JointState:
    """Joint state for ``transform_object(obj, ..., scale)`` matching ``state``."""
    return JointState(
        {
            jid: q * scale if obj.joints[jid].kind is JointKind.PRISMATIC else q
            for jid, q in state.items()
        }
    )
