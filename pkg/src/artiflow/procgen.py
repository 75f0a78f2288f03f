"""Procedural desk-scale articulated objects.

Every object faces +x with +z up; the root link is the static body and
opening always means increasing q.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import ArticulatedObject, JointKind, JointSpec, LinkSpec, Mesh, box_mesh
from .transforms import Pose

PANEL_THICKNESS = 0.02


class ProcKind(str, enum.Enum):
    DRAWER = "drawer"
    DOOR = "door"
    LID = "lid"
    CABINET_2JOINT = "cabinet2joint"


@dataclass(frozen=True)
class ProcSpec:
    kind: ProcKind
    seed: int = 0
    body_width: tuple[float, float] = (0.35, 0.55)
    body_depth: tuple[float, float] = (0.35, 0.5)
    body_height: tuple[float, float] = (0.3, 0.5)
    door_width: tuple[float, float] = (0.2, 0.3)
    drawer_travel: tuple[float, float] = (0.2, 0.3)
    lid_radius: tuple[float, float] = (0.12, 0.2)
    lid_shape: str = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "kind", ProcKind(self.kind))
        for name in ("body_width", "body_depth", "body_height", "door_width", "drawer_travel", "lid_radius"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be a positive non-empty range")
        if self.lid_shape not in ("sphere", "flat"):
            raise ValueError("lid_shape must be 'sphere' or 'flat'")


def generate(spec: ProcSpec) -> ArticulatedObject:
    rng = np.random.default_rng(spec.seed)
    builder = {
        ProcKind.DRAWER: _drawer_object,
        ProcKind.DOOR: _door_object,
        ProcKind.LID: _lid_object,
        ProcKind.CABINET_2JOINT: _cabinet_object,
    }[spec.kind]
    return builder(spec, rng)


def _u(rng, bounds) -> float:
    return float(rng.uniform(*bounds))


def _body(spec, rng):
    w, d, h = _u(rng, spec.body_width), _u(rng, spec.body_depth), _u(rng, spec.body_height)
    body = LinkSpec("body", box_mesh((d, w, h), center=(0.0, 0.0, h / 2)))
    return body, w, d, h


def _drawer_parts(rng, spec, name, front_x, width, z_lo, z_hi, depth):
    """Drawer box sitting inside the body with its front plate proud of ``front_x``."""
    travel = min(_u(rng, spec.drawer_travel), 0.8 * depth)
    lip = 0.03
    dw, dh = 0.8 * width, 0.8 * (z_hi - z_lo)
    dd = 0.9 * depth
    zc = 0.5 * (z_lo + z_hi)
    link = LinkSpec(name, box_mesh((dd, dw, dh), center=(front_x + lip - dd / 2, 0.0, zc)))
    joint = JointSpec(
        f"{name}_slide", JointKind.PRISMATIC, "body", name,
        Pose(), (1.0, 0.0, 0.0), (0.0, travel),
    )
    return link, joint


def _door_parts(rng, spec, name, front_x, width, z_lo, z_hi):
    """Panel on the body front, hinged on its +y front edge, opening towards +x."""
    t = PANEL_THICKNESS
    height = z_hi - z_lo
    # child frame sits on the hinge line at the bottom of the panel
    mesh = box_mesh((t, width, height), center=(-t / 2, -width / 2, height / 2))
    link = LinkSpec(name, mesh)
    joint = JointSpec(
        f"{name}_hinge", JointKind.REVOLUTE, "body", name,
        Pose((front_x + t, width / 2, z_lo)), (0.0, 0.0, 1.0), (0.0, np.pi / 2),
    )
    return link, joint


def _drawer_object(spec, rng):
    body, w, d, h = _body(spec, rng)
    link, joint = _drawer_parts(rng, spec, "drawer", d / 2, w, 0.15 * h, 0.85 * h, d)
    return ArticulatedObject([body, link], [joint], "body", name=f"drawer_{spec.seed}", category="drawer")


def _door_object(spec, rng):
    body, w, d, h = _body(spec, rng)
    width = min(_u(rng, spec.door_width), w)
    link, joint = _door_parts(rng, spec, "door", d / 2, width, 0.0, h)
    return ArticulatedObject([body, link], [joint], "body", name=f"door_{spec.seed}", category="door")


def quarter_sphere_shell(radius: float, n_polar: int = 16, n_sweep: int = 8) -> Mesh:
    """Quarter of a sphere centred at the origin.

    Points are ``R (sin a cos b, cos a, sin a sin b)`` for polar angle
    ``a`` in [0, pi] measured from +y and sweep ``b`` in [0, pi/2] from +x
    towards +z, so the shell wraps a quarter turn about the y axis.
    Triangles face outward.
    """
    a = np.linspace(0.0, np.pi, n_polar + 1)
    b = np.linspace(0.0, np.pi / 2, n_sweep + 1)
    A, B = np.meshgrid(a, b, indexing="ij")
    verts = radius * np.stack([np.sin(A) * np.cos(B), np.cos(A), np.sin(A) * np.sin(B)], axis=-1)
    verts = verts.reshape(-1, 3)
    idx = np.arange(len(verts)).reshape(n_polar + 1, n_sweep + 1)
    faces = []
    for i in range(n_polar):
        for j in range(n_sweep):
            p00, p01, p10, p11 = idx[i, j], idx[i, j + 1], idx[i + 1, j], idx[i + 1, j + 1]
            if i > 0:
                faces.append([p00, p01, p10])
            if i < n_polar - 1:
                faces.append([p01, p11, p10])
    faces = np.array(faces)
    tri = verts[faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    outward = np.einsum("ij,ij->i", normal, tri.mean(axis=1)) > 0
    faces[~outward] = faces[~outward][:, ::-1]
    return Mesh(verts, faces)


def _lid_object(spec, rng):
    body, w, d, h = _body(spec, rng)
    if spec.lid_shape == "sphere":
        radius = min(_u(rng, spec.lid_radius), 0.5 * min(w, d))
        mesh = quarter_sphere_shell(radius)
        # hinge through the sphere centre at the top-centre of the body
        origin = Pose((0.0, 0.0, h))
        name = "lid_sphere"
    else:
        t = PANEL_THICKNESS
        mesh = box_mesh((d, w, t), center=(d / 2, 0.0, t / 2))
        origin = Pose((-d / 2, 0.0, h))
        name = "lid_flat"
    lid = LinkSpec("lid", mesh)
    # rotating about -y lifts the front (+x) edge upward
    joint = JointSpec("lid_hinge", JointKind.REVOLUTE, "body", "lid", origin, (0.0, -1.0, 0.0), (0.0, np.pi / 2))
    return ArticulatedObject([body, lid], [joint], "body", name=f"{name}_{spec.seed}", category="lid")


def _cabinet_object(spec, rng):
    body, w, d, h = _body(spec, rng)
    split = 0.4 * h
    width = min(_u(rng, spec.door_width), w)
    door, hinge = _door_parts(rng, spec, "door", d / 2, width, split, h)
    drawer, slide = _drawer_parts(rng, spec, "drawer", d / 2, w, 0.05 * h, split - 0.05 * h, d)
    return ArticulatedObject(
        [body, door, drawer], [hinge, slide], "body",
        name=f"cabinet_{spec.seed}", category="cabinet",
    )


def default_suite(seed: int = 0) -> list[ArticulatedObject]:
    """Twenty objects: 6 drawers, 6 doors, 4 quarter-sphere lids, 4 two-joint cabinets."""
    kinds = [ProcKind.DRAWER] * 6 + [ProcKind.DOOR] * 6 + [ProcKind.LID] * 4 + [ProcKind.CABINET_2JOINT] * 4
    return [generate(ProcSpec(kind, seed=seed * 1000 + i)) for i, kind in enumerate(kinds)]
