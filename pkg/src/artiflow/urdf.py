"""Import a restricted URDF subset.

Supported: ``revolute``, ``prismatic``, ``continuous`` (mapped to revolute on
[0, 2*pi]) and ``fixed`` joints (child merged into the parent frame). Link
geometry may be ``box`` primitives or ``mesh`` files in the ASCII triangle
format read by :func:`artiflow.scene_io.load_mesh`.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .errors import SceneError, SceneParseError
from .model import ArticulatedObject, JointKind, JointSpec, LinkSpec, Mesh, box_mesh
from .scene_io import load_mesh
from .transforms import Pose, quat_from_rpy

_MOVABLE = {"revolute", "prismatic", "continuous"}


def _floats(text: str | None, n: int, default=None, what: str = "value") -> list[float]:
    if text is None:
        if default is None:
            raise SceneError(f"missing {what}")
        return list(default)
    parts = text.split()
    if len(parts) != n:
        raise SceneError(f"{what} needs {n} numbers, got {text!r}")
    return [float(p) for p in parts]


def _origin(elem: ET.Element | None) -> Pose:
    if elem is None:
        return Pose.identity()
    xyz = _floats(elem.get("xyz"), 3, (0.0, 0.0, 0.0), "origin xyz")
    rpy = _floats(elem.get("rpy"), 3, (0.0, 0.0, 0.0), "origin rpy")
    return Pose(xyz, quat_from_rpy(*rpy))


def _link_geometry(link: ET.Element, base_dir: Path) -> list[Mesh]:
    shapes = link.findall("visual") or link.findall("collision")
    meshes = []
    for shape in shapes:
        geo = shape.find("geometry")
        if geo is None:
            continue
        place = _origin(shape.find("origin"))
        box = geo.find("box")
        mesh_el = geo.find("mesh")
        if box is not None:
            size = _floats(box.get("size"), 3, what="box size")
            if min(size) <= 0:
                raise SceneError(f"link {link.get('name')!r}: box size must be positive")
            meshes.append(box_mesh(size).transformed(place))
        elif mesh_el is not None:
            filename = mesh_el.get("filename") or ""
            if filename.startswith("package://"):
                filename = filename[len("package://"):]
            path = base_dir / filename
            if not filename or not path.is_file():
                raise SceneError(f"unresolvable mesh path {filename!r}")
            scale = np.array(_floats(mesh_el.get("scale"), 3, (1.0, 1.0, 1.0), "mesh scale"))
            m = load_mesh(path)
            meshes.append(Mesh(place.apply(m.vertices * scale), m.faces))
        else:
            raise SceneError(f"link {link.get('name')!r}: only box and mesh geometry are supported")
    return meshes


def import_urdf_subset(
    xml_text: str, base_dir: str | Path | None = None, name: str | None = None,
    category: str = "uncategorized",
) -> ArticulatedObject:
    try:
        robot = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise SceneParseError(f"malformed XML: {exc.msg}", line, col + 1) from None
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    geometry: dict[str, list[Mesh]] = {}
    for link in robot.findall("link"):
        lid = link.get("name")
        if not lid:
            raise SceneError("link without a name")
        if lid in geometry:
            raise SceneError(f"duplicate link id {lid!r}")
        geometry[lid] = _link_geometry(link, base)

    raw_joints = []
    seen = set()
    for j in robot.findall("joint"):
        jid = j.get("name")
        jtype = j.get("type")
        if jid in seen:
            raise SceneError(f"duplicate joint id {jid!r}")
        seen.add(jid)
        if jtype not in _MOVABLE and jtype != "fixed":
            raise SceneError(f"joint {jid!r}: unsupported joint type {jtype!r}")
        parent = j.find("parent")
        child = j.find("child")
        if parent is None or child is None:
            raise SceneError(f"joint {jid!r}: missing parent or child")
        raw_joints.append((jid, jtype, parent.get("link"), child.get("link"), j))

    children_of: dict[str, list] = {lid: [] for lid in geometry}
    child_links = set()
    for rj in raw_joints:
        for lid in (rj[2], rj[3]):
            if lid not in geometry:
                raise SceneError(f"joint {rj[0]!r} references dangling link {lid!r}")
        if rj[3] in child_links:
            raise SceneError(f"link {rj[3]!r} has more than one parent joint")
        child_links.add(rj[3])
        children_of[rj[2]].append(rj)
    roots = [lid for lid in geometry if lid not in child_links]
    if len(roots) != 1:
        raise SceneError(f"expected exactly one root link, found {roots}")
    root = roots[0]

    # owner[link] = (surviving link id, pose of link frame in the owner's frame)
    owner: dict[str, tuple[str, Pose]] = {root: (root, Pose.identity())}
    merged: dict[str, list[Mesh]] = {root: list(geometry[root])}
    joints: list[JointSpec] = []
    queue = [root]
    while queue:
        lid = queue.pop(0)
        kept, offset = owner[lid]
        for jid, jtype, _, child, elem in children_of[lid]:
            origin = offset @ _origin(elem.find("origin"))
            if jtype == "fixed":
                owner[child] = (kept, origin)
                merged[kept].extend(m.transformed(origin) for m in geometry[child])
            else:
                joints.append(_movable_joint(jid, jtype, kept, child, origin, elem))
                owner[child] = (child, Pose.identity())
                merged[child] = list(geometry[child])
            queue.append(child)
    if len(owner) != len(geometry):
        raise SceneError("kinematic cycle or disconnected links")

    links = {}
    for lid, meshes in merged.items():
        if not meshes:
            raise SceneError(f"link {lid!r} has no geometry")
        links[lid] = LinkSpec(lid, Mesh.concatenate(meshes))
    return ArticulatedObject(
        links, {j.id: j for j in joints}, root,
        name=name or robot.get("name", "object"), category=category,
    )


def _movable_joint(jid, jtype, parent, child, origin, elem) -> JointSpec:
    axis_el = elem.find("axis")
    if axis_el is None or axis_el.get("xyz") is None:
        raise SceneError(f"joint {jid!r}: missing axis on movable joint")
    axis = _floats(axis_el.get("xyz"), 3, what="axis")
    if jtype == "continuous":
        kind, limits = JointKind.REVOLUTE, (0.0, 2 * math.pi)
    else:
        kind = JointKind(jtype)
        lim = elem.find("limit")
        if lim is None or lim.get("lower") is None or lim.get("upper") is None:
            raise SceneError(f"joint {jid!r}: missing limit lower/upper")
        limits = (float(lim.get("lower")), float(lim.get("upper")))
    return JointSpec(jid, kind, parent, child, origin, axis, limits)
