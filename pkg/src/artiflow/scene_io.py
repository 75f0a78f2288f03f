"""Native text format for articulated objects, plus the ASCII mesh format.

Scene records, one per line::

    name <str>
    category <str>
    root <link-id>
    link <id> box <ex> <ey> <ez> [mass <m>]
    link <id> mesh <path> [mass <m>]
    joint <id> <revolute|prismatic> <parent> <child> origin <tx ty tz qx qy qz qw> axis <ax ay az> limits <lo hi>

Mesh files hold ``v x y z`` and ``f i j k`` lines with 0-based indices.
``#`` starts a comment.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import SceneError, SceneParseError
from .model import ArticulatedObject, JointKind, JointSpec, LinkSpec, Mesh
from .transforms import Pose

_TOKEN = re.compile(r"\S+")


def parse_mesh(text: str) -> Mesh:
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "v" and len(parts) == 4:
                verts.append([float(x) for x in parts[1:]])
            elif parts[0] == "f" and len(parts) == 4:
                faces.append([int(x) for x in parts[1:]])
            else:
                raise ValueError
        except ValueError:
            raise SceneParseError(f"bad mesh record {line!r}", lineno) from None
    if not faces:
        raise SceneParseError("mesh has no triangles")
    return Mesh(np.array(verts).reshape(-1, 3), np.array(faces))


def format_mesh(mesh: Mesh) -> str:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {i} {j} {k}" for i, j, k in mesh.faces.tolist()]
    return "\n".join(lines) + "\n"


def load_mesh(path: str | Path) -> Mesh:
    return parse_mesh(Path(path).read_text(encoding="utf-8"))


class _Cursor:
    def __init__(self, line: str, lineno: int):
        self.tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(line)]
        self.pos = 0
        self.lineno = lineno

    def error(self, message: str) -> SceneParseError:
        col = self.tokens[min(self.pos, len(self.tokens) - 1)][1] if self.tokens else None
        return SceneParseError(message, self.lineno, col)

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def word(self, what: str) -> str:
        if self.done():
            raise self.error(f"expected {what}, got end of line")
        tok = self.tokens[self.pos][0]
        self.pos += 1
        return tok

    def keyword(self, kw: str) -> None:
        if self.done() or self.tokens[self.pos][0] != kw:
            raise self.error(f"expected {kw!r}")
        self.pos += 1

    def numbers(self, count: int, what: str) -> list[float]:
        out = []
        for _ in range(count):
            if self.done():
                raise self.error(f"expected {count} numbers for {what}")
            tok = self.tokens[self.pos][0]
            try:
                out.append(float(tok))
            except ValueError:
                raise self.error(f"expected a number for {what}, got {tok!r}") from None
            self.pos += 1
        return out

    def end(self) -> None:
        if not self.done():
            raise self.error(f"unexpected token {self.tokens[self.pos][0]!r}")


def parse_scene(
    text: str,
    base_dir: str | Path | None = None,
    mesh_loader: Callable[[str], Mesh] | None = None,
) -> ArticulatedObject:
    """Parse the native text format into a validated object.

    Mesh paths are resolved against ``base_dir`` unless ``mesh_loader`` is
    given, in which case it receives the raw path string.
    """
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    links: dict[str, LinkSpec] = {}
    joints: dict[str, JointSpec] = {}
    root = None
    name, category = "object", "uncategorized"

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        cur = _Cursor(line, lineno)
        if cur.done():
            continue
        record = cur.word("record type")
        if record == "root":
            if root is not None:
                raise cur.error("duplicate root record")
            root = cur.word("root link id")
            cur.end()
        elif record == "name":
            name = cur.word("name")
            cur.end()
        elif record == "category":
            category = cur.word("category")
            cur.end()
        elif record == "link":
            link = _parse_link(cur, base, mesh_loader)
            if link.id in links:
                raise SceneParseError(f"duplicate link id {link.id!r}", lineno)
            links[link.id] = link
        elif record == "joint":
            joint = _parse_joint(cur)
            if joint.id in joints:
                raise SceneParseError(f"duplicate joint id {joint.id!r}", lineno)
            joints[joint.id] = joint
        else:
            cur.pos -= 1
            raise cur.error(f"unknown record type {record!r}")

    if root is None:
        raise SceneParseError("missing root record")
    return ArticulatedObject(links, joints, root, name=name, category=category)


def _parse_link(cur: _Cursor, base: Path, mesh_loader) -> LinkSpec:
    lid = cur.word("link id")
    kind = cur.word("geometry kind")
    if kind == "box":
        extents = cur.numbers(3, "box extents")
        if min(extents) <= 0:
            raise SceneParseError(f"link {lid!r}: box extents must be positive", cur.lineno)
        link = LinkSpec.box(lid, extents)
    elif kind == "mesh":
        path = cur.word("mesh path")
        try:
            mesh = mesh_loader(path) if mesh_loader else load_mesh(base / path)
        except OSError as exc:
            raise SceneParseError(f"cannot read mesh {path!r}: {exc}", cur.lineno) from None
        except SceneError as exc:
            raise SceneParseError(f"mesh {path!r}: {exc}", cur.lineno) from None
        link = LinkSpec(lid, mesh, mesh_path=path)
    else:
        cur.pos -= 1
        raise cur.error(f"unknown geometry {kind!r}")
    if not cur.done():
        cur.keyword("mass")
        (mass,) = cur.numbers(1, "mass")
        link = LinkSpec(link.id, link.mesh, link.box_extents, link.mesh_path, mass)
    cur.end()
    return link


def _parse_joint(cur: _Cursor) -> JointSpec:
    jid = cur.word("joint id")
    kind = cur.word("joint kind")
    if kind not in ("revolute", "prismatic"):
        cur.pos -= 1
        raise cur.error(f"unknown joint kind {kind!r}")
    parent = cur.word("parent link")
    child = cur.word("child link")
    cur.keyword("origin")
    o = cur.numbers(7, "origin")
    cur.keyword("axis")
    axis = cur.numbers(3, "axis")
    cur.keyword("limits")
    limits = cur.numbers(2, "limits")
    cur.end()
    try:
        return JointSpec(jid, JointKind(kind), parent, child, Pose(o[:3], o[3:]), axis, tuple(limits))
    except (SceneError, ValueError) as exc:
        raise SceneParseError(str(exc), cur.lineno) from None


def serialize_scene(obj: ArticulatedObject) -> str:
    """Text form of ``obj``. Mesh links must carry a ``mesh_path``."""
    out = [f"name {obj.name}", f"category {obj.category}", f"root {obj.root_link}"]
    for link in obj.links.values():
        if link.box_extents is not None:
            geo = "box " + " ".join(repr(float(e)) for e in link.box_extents)
        elif link.mesh_path is not None:
            geo = f"mesh {link.mesh_path}"
        else:
            raise SceneError(f"link {link.id!r} has an unnamed mesh; use save_scene")
        mass = "" if link.mass == 1.0 else f" mass {link.mass!r}"
        out.append(f"link {link.id} {geo}{mass}")
    for j in obj.joints.values():
        o = list(j.origin.translation) + list(j.origin.rotation)
        out.append(
            f"joint {j.id} {j.kind.value} {j.parent_link} {j.child_link} "
            f"origin {' '.join(repr(float(x)) for x in o)} "
            f"axis {' '.join(repr(float(x)) for x in j.axis)} "
            f"limits {j.limits[0]!r} {j.limits[1]!r}"
        )
    return "\n".join(out) + "\n"


def save_scene(obj: ArticulatedObject, path: str | Path) -> Path:
    """Write ``obj`` to ``path``, writing unnamed meshes next to it."""
    from dataclasses import replace

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    links = {}
    for lid, link in obj.links.items():
        if link.box_extents is None:
            mesh_name = f"{path.stem}.{lid}.mesh"
            (path.parent / mesh_name).write_text(format_mesh(link.mesh), encoding="utf-8")
            link = replace(link, mesh_path=mesh_name)
        links[lid] = link
    named = ArticulatedObject(links, obj.joints, obj.root_link, obj.name, obj.category)
    path.write_text(serialize_scene(named), encoding="utf-8")
    return path


def load_scene(path: str | Path) -> ArticulatedObject:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".urdf" or text.lstrip().startswith("<"):
        from .urdf import import_urdf_subset

        return import_urdf_subset(text, base_dir=path.parent, name=path.stem)
    return parse_scene(text, base_dir=path.parent)
