"""Pinhole depth camera: z-buffer rendering, back-projection, viewpoint sampling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .geom import PointCloud
from .model import ArticulatedObject, forward_kinematics
from .transforms import Pose

NEAR = 1e-3


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Intrinsics in pixels plus a world-to-camera pose.

    Camera frame: +z forward, +x right, +y down. Pixel ``(u, v)`` has its
    centre at integer coordinates.
    """

    fx: float = 256.0
    fy: float = 256.0
    cx: float = 128.0
    cy: float = 128.0
    width: int = 256
    height: int = 256
    extrinsics: Pose = Pose()

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0), **intrinsics) -> CameraModel:
        eye = np.asarray(eye, dtype=float)
        z = np.asarray(target, dtype=float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, up)
        if np.linalg.norm(x) < 1e-9:
            x = np.cross(z, (1.0, 0.0, 0.0))
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        rot = np.stack([x, y, z])
        m = np.eye(4)
        m[:3, :3] = rot
        m[:3, 3] = -rot @ eye
        return cls(extrinsics=Pose.from_matrix(m), **intrinsics)

    @property
    def position(self) -> np.ndarray:
        return self.extrinsics.inverse().translation

    def with_resolution(self, width: int, height: int) -> CameraModel:
        sx, sy = width / self.width, height / self.height
        return replace(
            self, width=width, height=height,
            fx=self.fx * sx, fy=self.fy * sy, cx=self.cx * sx, cy=self.cy * sy,
        )

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) camera-frame ray directions with unit z component."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(float)
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=2)


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Per-pixel camera-frame depth (m); background is ``inf``.

    ``link_ids`` indexes ``link_names`` (-1 for background).
    """

    depth: np.ndarray
    link_ids: np.ndarray | None = None
    link_names: tuple[str, ...] = ()

    @property
    def foreground(self) -> np.ndarray:
        return np.isfinite(self.depth)


def _posed_triangles(obj: ArticulatedObject, state: Mapping[str, float]):
    poses = forward_kinematics(obj, state)
    tris, ids = [], []
    for i, (lid, link) in enumerate(obj.links.items()):
        t = link.mesh.triangles
        tris.append(poses[lid].apply(t.reshape(-1, 3)).reshape(-1, 3, 3))
        ids.append(np.full(len(t), i))
    return np.concatenate(tris), np.concatenate(ids), tuple(obj.links)


def render_depth(obj: ArticulatedObject, state: Mapping[str, float], camera: CameraModel) -> DepthImage:
    """Nearest-surface depth and link id per pixel; triangle winding is ignored."""
    tris, tri_ids, names = _posed_triangles(obj, state)
    h, w = camera.height, camera.width
    depth = np.full((h, w), np.inf)
    ids = np.full((h, w), -1, dtype=np.int32)
    rot = camera.extrinsics.rotation_matrix
    cam_tris = tris @ rot.T + camera.extrinsics.translation
    rays = camera.pixel_rays()

    for tri, tid in zip(cam_tris, tri_ids):
        z = tri[:, 2]
        if (z <= NEAR).all():
            continue
        if (z > NEAR).all():
            u = camera.fx * tri[:, 0] / z + camera.cx
            v = camera.fy * tri[:, 1] / z + camera.cy
            u0, u1 = int(np.floor(u.min())), int(np.ceil(u.max()))
            v0, v1 = int(np.floor(v.min())), int(np.ceil(v.max()))
            u0, v0 = max(u0, 0), max(v0, 0)
            u1, v1 = min(u1, w - 1), min(v1, h - 1)
            if u0 > u1 or v0 > v1:
                continue
        else:
            u0, v0, u1, v1 = 0, 0, w - 1, h - 1
        d = rays[v0 : v1 + 1, u0 : u1 + 1]
        t = _ray_triangle(d, tri)
        region = depth[v0 : v1 + 1, u0 : u1 + 1]
        closer = t < region
        if closer.any():
            region[closer] = t[closer]
            ids[v0 : v1 + 1, u0 : u1 + 1][closer] = tid
    return DepthImage(depth, ids, names)


def _ray_triangle(d: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Ray parameter (= camera depth, since d_z = 1) of rays from the origin; inf on miss."""
    v0, v1, v2 = tri
    e1, e2 = v1 - v0, v2 - v0
    p = np.cross(d, e2)
    det = p @ e1
    out = np.full(d.shape[:-1], np.inf)
    ok = np.abs(det) > 1e-15
    if not ok.any():
        return out
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = -v0
    bu = (p @ s) * inv
    q = np.cross(s, e1)
    bv = (d @ q) * inv
    t = (q @ e2) * inv
    eps = 1e-12
    hit = ok & (bu >= -eps) & (bv >= -eps) & (bu + bv <= 1 + eps) & (t > NEAR)
    out[hit] = t[hit]
    return out


def backproject(depth: DepthImage, camera: CameraModel, stride: int = 1) -> PointCloud:
    """Foreground pixels to world-frame points (labelled when an id buffer exists)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    z = depth.depth[::stride, ::stride]
    v, u = np.mgrid[0 : depth.depth.shape[0] : stride, 0 : depth.depth.shape[1] : stride]
    fg = np.isfinite(z)
    zz = z[fg]
    cam = np.stack([(u[fg] - camera.cx) * zz / camera.fx, (v[fg] - camera.cy) * zz / camera.fy, zz], axis=1)
    world = camera.extrinsics.inverse().apply(cam) if len(cam) else np.zeros((0, 3))
    labels = None
    if depth.link_ids is not None and depth.link_names:
        names = np.array(depth.link_names)
        labels = names[depth.link_ids[::stride, ::stride][fg]]
    return PointCloud(world, link_labels=labels)


def random_viewpoint(
    rng_seed,
    elevation_range=(np.deg2rad(15), np.deg2rad(60)),
    azimuth_range=(-np.deg2rad(60), np.deg2rad(60)),
    distance_range=(1.0, 2.0),
    lookat=(0.0, 0.0, 0.0),
    **intrinsics,
) -> CameraModel:
    """Uniformly sampled camera on a spherical-coordinate box around ``lookat``.

    Angles in radians; azimuth is measured from +x about +z, elevation from
    the xy-plane.
    """
    for name, (lo, hi) in (
        ("elevation", elevation_range), ("azimuth", azimuth_range), ("distance", distance_range),
    ):
        if lo > hi:
            raise ValueError(f"empty {name} range ({lo}, {hi})")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    el = rng.uniform(*elevation_range)
    az = rng.uniform(*azimuth_range)
    dist = rng.uniform(*distance_range)
    lookat = np.asarray(lookat, dtype=float)
    eye = lookat + dist * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return CameraModel.look_at(eye, lookat, **intrinsics)


def object_bounds(obj: ArticulatedObject, state: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
    tris, _, _ = _posed_triangles(obj, state)
    pts = tris.reshape(-1, 3)
    return pts.min(axis=0), pts.max(axis=0)


def default_camera(
    obj: ArticulatedObject,
    state: Mapping[str, float] | None = None,
    elevation: float = np.deg2rad(30),
    azimuth: float = np.deg2rad(20),
    distance_scale: float = 1.6,
) -> CameraModel:
    """Fixed viewpoint in front (+x) of the object, sized to its bounding box."""
    lo, hi = object_bounds(obj, state if state is not None else obj.closed_state())
    center = 0.5 * (lo + hi)
    diag = float(np.linalg.norm(hi - lo))
    return random_viewpoint(
        0, (elevation, elevation), (azimuth, azimuth),
        (distance_scale * diag, distance_scale * diag), center,
    )


def write_pgm(depth: DepthImage, path: str | Path, max_depth: float | None = None) -> Path:
    """ASCII PGM (P2) with depth in millimetres; background written as 0."""
    d = depth.depth
    fg = np.isfinite(d)
    mm = np.zeros(d.shape, dtype=np.int64)
    mm[fg] = np.clip(np.round(d[fg] * 1000.0), 1, 65535).astype(np.int64)
    maxval = 65535 if max_depth is None else int(round(max_depth * 1000))
    lines = ["P2", f"{d.shape[1]} {d.shape[0]}", str(maxval)]
    lines += [" ".join(map(str, row)) for row in np.minimum(mm, maxval).tolist()]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path
