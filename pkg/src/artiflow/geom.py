"""Surface sampling and point-cloud geometry (normals, curvature, edges)."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError
from .model import ArticulatedObject, forward_kinematics

DEFAULT_K = 16
DEFAULT_ANGLE_GAP = 3 * np.pi / 4
DEFAULT_CURVATURE_MAX = 500.0


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    link_labels: np.ndarray | None = None
    part_mask: np.ndarray | None = None
    normals: np.ndarray | None = None
    normal_valid: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        n = len(pts)
        for name, dtype in (("link_labels", str), ("part_mask", bool), ("normal_valid", bool)):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=dtype).reshape(-1)
                if len(val) != n:
                    raise ValueError(f"{name} has length {len(val)}, expected {n}")
                object.__setattr__(self, name, val)
        if self.normals is not None:
            normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(normals) != n:
                raise ValueError(f"normals has length {len(normals)}, expected {n}")
            check = np.ones(n, dtype=bool) if self.normal_valid is None else self.normal_valid
            if np.any(np.abs(np.linalg.norm(normals[check], axis=1) - 1.0) > 1e-6):
                raise ValueError("normals must be unit length within 1e-6")
            object.__setattr__(self, "normals", normals)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_valid(self) -> bool:
        return len(self.points) >= 1

    def with_mask_for(self, link_id: str) -> PointCloud:
        if self.link_labels is None:
            raise ValueError("cloud has no link labels")
        return replace(self, part_mask=self.link_labels == link_id)

    def subset(self, index) -> PointCloud:
        def pick(a):
            return None if a is None else a[index]

        return PointCloud(
            self.points[index], pick(self.link_labels), pick(self.part_mask),
            pick(self.normals), pick(self.normal_valid),
        )


@dataclass(frozen=True)
class SurfaceSample:
    point: np.ndarray
    link_id: str
    triangle_index: int
    barycentric: np.ndarray


def _surface_triangles(obj: ArticulatedObject):
    tris, labels, local_index = [], [], []
    for lid, link in obj.links.items():
        t = link.mesh.triangles
        tris.append(t)
        labels.extend([lid] * len(t))
        local_index.append(np.arange(len(t)))
    return np.concatenate(tris), np.array(labels), np.concatenate(local_index)


def sample_surface(
    obj: ArticulatedObject,
    state: Mapping[str, float],
    n: int,
    rng_seed: int,
    return_samples: bool = False,
):
    """Area-uniform samples over every link surface, posed at ``state``.

    Samples are drawn in link-local frames, so the same seed yields the same
    material points at every state.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    poses = forward_kinematics(obj, state)
    tris, labels, local_index = _surface_triangles(obj)
    areas = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)
    total = areas.sum()
    if not total > 0:
        raise DegenerateGeometryError("object has zero surface area")
    rng = np.random.default_rng(rng_seed)
    chosen = rng.choice(len(tris), size=n, p=areas / total)
    r1, r2 = rng.random((2, n))
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    local = np.einsum("nk,nkd->nd", bary, tris[chosen])
    point_labels = labels[chosen]
    points = np.empty_like(local)
    for lid in obj.links:
        sel = point_labels == lid
        if sel.any():
            points[sel] = poses[lid].apply(local[sel])
    cloud = PointCloud(points, link_labels=point_labels)
    if not return_samples:
        return cloud
    samples = [
        SurfaceSample(points[i], str(point_labels[i]), int(local_index[chosen[i]]), bary[i])
        for i in range(n)
    ]
    return cloud, samples


def knn_indices(points: np.ndarray, k: int, query: np.ndarray | None = None) -> np.ndarray:
    """Exact k nearest neighbours (the query point itself included)."""
    tree = cKDTree(points)
    _, idx = tree.query(points if query is None else query, k=k)
    return np.asarray(idx).reshape(-1, k)


def _neighborhood_eigen(points: np.ndarray, nbrs: np.ndarray):
    nb = points[nbrs]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / nbrs.shape[1]
    return np.linalg.eigh(cov)


def estimate_normals(
    cloud: PointCloud,
    k: int = DEFAULT_K,
    view_point=(0.0, 0.0, 0.0),
    indices: np.ndarray | None = None,
) -> PointCloud:
    """PCA normals oriented towards ``view_point``.

    When ``indices`` is given, only those points receive normals (neighbours
    still come from the whole cloud); the rest are marked invalid.
    """
    pts = cloud.points
    n = len(pts)
    if not n > k >= 3:
        raise ValueError(f"need N > k >= 3 (N={n}, k={k})")
    query = np.arange(n) if indices is None else np.asarray(indices, dtype=np.int64)
    normals = np.zeros((n, 3))
    valid = np.zeros(n, dtype=bool)
    if len(query):
        nbrs = knn_indices(pts, k, pts[query])
        evals, evecs = _neighborhood_eigen(pts, nbrs)
        nrm = evecs[:, :, 0]
        to_view = np.asarray(view_point, dtype=float) - pts[query]
        flip = np.einsum("ij,ij->i", nrm, to_view) < 0
        nrm[flip] *= -1
        ok = evals[:, 2] > 1e-24
        nrm[~ok] = 0.0
        normals[query] = nrm
        valid[query] = ok
    return replace(cloud, normals=normals, normal_valid=valid)


def local_frames(points: np.ndarray, k: int):
    """kNN indices plus neighbourhood covariance eigen-decomposition.

    Returned so edge detection and curvature can share one neighbour search.
    """
    nbrs = knn_indices(points, k)
    evals, evecs = _neighborhood_eigen(points, nbrs)
    return nbrs, evals, evecs


def estimate_gaussian_curvature(cloud: PointCloud, k: int = DEFAULT_K, frames=None) -> np.ndarray:
    """Gaussian curvature (1/m^2) from a quadric height-field fit per point.

    Each neighbourhood is expressed in its PCA tangent frame centred on the
    point, ``w = a u^2 + b uv + c v^2 + d u + e v + f`` is fitted by least
    squares, and the curvature of that graph is evaluated at the point.
    Ill-conditioned fits return ``inf``.
    """
    pts = cloud.points
    n = len(pts)
    if not n > k >= 6:
        raise ValueError(f"need N > k >= 6 (N={n}, k={k})")
    nbrs, _, evecs = frames if frames is not None else local_frames(pts, k)
    d = pts[nbrs] - pts[:, None, :]
    u = np.einsum("nkd,nd->nk", d, evecs[:, :, 2])
    v = np.einsum("nkd,nd->nk", d, evecs[:, :, 1])
    w = np.einsum("nkd,nd->nk", d, evecs[:, :, 0])
    h = np.sqrt((u**2 + v**2).max(axis=1))
    h = np.where(h > 0, h, 1.0)[:, None]
    U, V, W = u / h, v / h, w / h
    A = np.stack([U * U, U * V, V * V, U, V, np.ones_like(U)], axis=2)
    AtA = np.einsum("nki,nkj->nij", A, A)
    Atw = np.einsum("nki,nk->ni", A, W)
    curvature = np.full(n, np.inf)
    ev = np.linalg.eigvalsh(AtA)
    with np.errstate(all="ignore"):
        cond = ev[:, -1] / ev[:, 0]
    ok = (ev[:, 0] > 0) & (cond < 1e12)
    if ok.any():
        c = np.linalg.solve(AtA[ok], Atw[ok][..., None])[..., 0]
        a, b, cc, du, dv = c[:, 0], c[:, 1], c[:, 2], c[:, 3], c[:, 4]
        hh = h[ok, 0]
        curvature[ok] = (4 * a * cc - b * b) / hh**2 / (1 + du * du + dv * dv) ** 2
    return curvature


def detect_edges(
    cloud: PointCloud,
    k: int = DEFAULT_K,
    angle_gap_threshold: float = DEFAULT_ANGLE_GAP,
    linearity_ratio: float = 10.0,
    planarity_ratio: float = 10.0,
    frames=None,
) -> np.ndarray:
    """Flag boundary and crease points.

    Boundary: the widest angular gap between neighbour directions, projected
    into the tangent plane, exceeds ``angle_gap_threshold``.
    Crease: the neighbourhood covariance is line-like (largest / middle
    eigenvalue > ``linearity_ratio``) or not flat (middle / smallest
    eigenvalue < ``planarity_ratio``).
    """
    pts = cloud.points
    n = len(pts)
    if not n > k >= 6:
        raise ValueError(f"need N > k >= 6 (N={n}, k={k})")
    nbrs, evals, evecs = frames if frames is not None else local_frames(pts, k)
    d = pts[nbrs[:, 1:]] - pts[:, None, :]
    x = np.einsum("nkd,nd->nk", d, evecs[:, :, 2])
    y = np.einsum("nkd,nd->nk", d, evecs[:, :, 1])
    ang = np.sort(np.arctan2(y, x), axis=1)
    gaps = np.diff(ang, axis=1)
    wrap = 2 * np.pi - (ang[:, -1] - ang[:, 0])
    max_gap = np.maximum(gaps.max(axis=1, initial=0.0), wrap)
    boundary = max_gap > angle_gap_threshold
    lam_small, lam_mid, lam_big = evals[:, 0], evals[:, 1], evals[:, 2]
    linear = lam_big > linearity_ratio * lam_mid
    curved = lam_mid < planarity_ratio * lam_small
    return boundary | linear | curved
