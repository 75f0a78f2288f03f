import numpy as np
import pytest

from artiflow import geom
from artiflow.errors import DegenerateGeometryError
from artiflow.geom import PointCloud, detect_edges, estimate_gaussian_curvature, estimate_normals, sample_surface
from artiflow.model import ArticulatedObject, LinkSpec, Mesh

from conftest import random_pose


def _single_box(extents=(1.0, 1.0, 1.0)):
    return ArticulatedObject([LinkSpec.box("b", extents)], [], "b")


def _plane(n, rng, half=1.0):
    xy = rng.uniform(-half, half, (n, 2))
    return np.c_[xy, np.zeros(n)]


def _sphere(n, rng, radius=1.0):
    p = rng.normal(size=(n, 3))
    return radius * p / np.linalg.norm(p, axis=1, keepdims=True)


# -- sampling ------------------------------------------------------------------


def test_face_fractions_within_three_sigma():
    obj = _single_box((1.0, 2.0, 3.0))
    n = 10000
    cloud, samples = sample_surface(obj, obj.closed_state(), n, 7, return_samples=True)
    areas = obj.links["b"].mesh.triangle_areas()
    face_area = areas.reshape(6, 2).sum(axis=1)
    p = face_area / face_area.sum()
    counts = np.bincount([s.triangle_index // 2 for s in samples], minlength=6)
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_samples_lie_on_their_triangles():
    obj = _single_box()
    cloud, samples = sample_surface(obj, obj.closed_state(), 200, 3, return_samples=True)
    tris = obj.links["b"].mesh.triangles
    for s in samples:
        assert np.all(s.barycentric >= 0) and s.barycentric.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(s.barycentric @ tris[s.triangle_index], s.point, atol=1e-12)
    assert set(cloud.link_labels) == {"b"}


def test_single_sample():
    obj = _single_box()
    cloud = sample_surface(obj, obj.closed_state(), 1, 0)
    assert len(cloud) == 1 and cloud.link_labels[0] == "b"
    assert np.isclose(np.abs(cloud.points[0]).max(), 0.5)


def test_sampling_is_deterministic(door):
    a = sample_surface(door, {"hinge": 0.4}, 500, 11)
    b = sample_surface(door, {"hinge": 0.4}, 500, 11)
    assert a.points.tobytes() == b.points.tobytes()
    assert list(a.link_labels) == list(b.link_labels)


def test_sampling_follows_material_points(door):
    """The same seed yields the same link-local points at any state."""
    a = sample_surface(door, {"hinge": 0.0}, 300, 5)
    b = sample_surface(door, {"hinge": 1.0}, 300, 5)
    assert list(a.link_labels) == list(b.link_labels)
    same = a.link_labels == "frame"
    np.testing.assert_allclose(a.points[same], b.points[same])
    assert not np.allclose(a.points[~same], b.points[~same])


def test_sampling_errors():
    flat = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    obj = ArticulatedObject([LinkSpec("z", flat)], [], "z")
    with pytest.raises(DegenerateGeometryError):
        sample_surface(obj, obj.closed_state(), 10, 0)
    with pytest.raises(ValueError):
        sample_surface(_single_box(), {}, 0, 0)


def test_point_cloud_invariants():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), link_labels=np.array(["a", "b"]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), normals=np.ones((2, 3)))
    assert not PointCloud(np.zeros((0, 3))).is_valid


# -- normals ---------------------------------------------------------------------


def test_plane_normals_face_camera(rng):
    cloud = PointCloud(_plane(500, rng))
    out = estimate_normals(cloud, 16, (0, 0, 1))
    assert out.normal_valid.all()
    np.testing.assert_allclose(out.normals, np.tile([0, 0, 1.0], (500, 1)), atol=1e-9)
    below = estimate_normals(cloud, 16, (0, 0, -1))
    np.testing.assert_allclose(below.normals[:, 2], -1.0, atol=1e-9)


def test_sphere_normals_within_5_degrees(rng):
    pts = _sphere(2000, rng)
    out = estimate_normals(PointCloud(pts), 16, (0, 0, 0))
    # viewpoint at the centre flips normals inward; compare up to that sign
    cos = np.abs(np.einsum("ij,ij->i", out.normals, pts))
    assert np.degrees(np.arccos(np.clip(cos, -1, 1))).max() < 5.0
    far = estimate_normals(PointCloud(pts), 16, (100.0, 0, 0))
    facing = pts[:, 0] > 0.2
    cos = np.einsum("ij,ij->i", far.normals[facing], pts[facing])
    assert np.degrees(np.arccos(np.clip(cos, -1, 1))).max() < 5.0


def test_noisy_plane_normals(rng):
    pts = _plane(5000, rng, half=0.5)
    pts[:, 2] += rng.normal(scale=1e-3, size=len(pts))
    out = estimate_normals(PointCloud(pts), 32, (0, 0, 1))
    err = np.degrees(np.arccos(np.clip(out.normals[:, 2], -1, 1)))
    assert err.mean() < 2.0


def test_degenerate_neighbourhood_flagged():
    pts = np.zeros((30, 3))
    pts[20:] = np.random.default_rng(0).normal(size=(10, 3)) + 10
    out = estimate_normals(PointCloud(pts), 8, (0, 0, 1))
    assert not out.normal_valid[:20].any()
    assert np.all(out.normals[:20] == 0)


def test_normals_subset_and_preconditions(rng):
    cloud = PointCloud(_plane(100, rng))
    out = estimate_normals(cloud, 8, (0, 0, 1), indices=np.arange(10))
    assert out.normal_valid[:10].all() and not out.normal_valid[10:].any()
    with pytest.raises(ValueError):
        estimate_normals(PointCloud(_plane(5, rng)), 8)


def test_normals_rigid_equivariance(rng):
    pts = _sphere(800, rng, 0.3) + rng.normal(scale=0.01, size=(800, 3))
    cloud = PointCloud(pts)
    nbrs = geom.knn_indices(pts, 16)
    base = estimate_normals(cloud, 16, (5, 0, 0))
    for _ in range(5):
        pose = random_pose(rng)
        moved = PointCloud(pose.apply(pts))
        assert np.array_equal(np.sort(geom.knn_indices(moved.points, 16), axis=1), np.sort(nbrs, axis=1))
        out = estimate_normals(moved, 16, pose.apply(np.array([5.0, 0, 0])))
        rotated = pose.apply_vector(base.normals)
        cos = np.clip(np.einsum("ij,ij->i", out.normals, rotated), -1, 1)
        assert np.arccos(cos).max() < 1e-6


# -- curvature ------------------------------------------------------------------------


def test_plane_curvature_zero(rng):
    pts = _plane(4000, rng)
    k = estimate_gaussian_curvature(PointCloud(pts), 16)
    interior = np.abs(pts[:, :2]).max(axis=1) < 0.9
    assert np.abs(k[interior]).max() < 1e-2


def test_sphere_curvature(rng):
    pts = _sphere(8000, rng, 0.1)
    k = estimate_gaussian_curvature(PointCloud(pts), 16)
    assert np.median(k) == pytest.approx(100.0, rel=0.2)
    assert np.mean(np.abs(k - 100) < 20) > 0.9


def test_cylinder_curvature(rng):
    n = 8000
    t = rng.uniform(0, 2 * np.pi, n)
    z = rng.uniform(-0.3, 0.3, n)
    pts = np.c_[0.1 * np.cos(t), 0.1 * np.sin(t), z]
    k = estimate_gaussian_curvature(PointCloud(pts), 16)
    interior = np.abs(z) < 0.25
    assert np.median(np.abs(k[interior])) < 10
    assert np.mean(np.abs(k[interior]) < 10) > 0.9


def test_curvature_invariances(rng):
    pts = _sphere(3000, rng, 0.2)
    k = estimate_gaussian_curvature(PointCloud(pts), 16)
    shifted = estimate_gaussian_curvature(PointCloud(pts + [3.0, -2.0, 1.0]), 16)
    np.testing.assert_allclose(shifted, k, rtol=1e-6)
    scaled = estimate_gaussian_curvature(PointCloud(pts * 2.0), 16)
    np.testing.assert_allclose(scaled, k / 4.0, rtol=1e-6)
    pose = random_pose(rng)
    rotated = estimate_gaussian_curvature(PointCloud(pose.apply(pts)), 16)
    np.testing.assert_allclose(rotated, k, rtol=1e-6)


def test_degenerate_fit_is_infinite():
    line = np.c_[np.linspace(0, 1, 40), np.zeros(40), np.zeros(40)]
    k = estimate_gaussian_curvature(PointCloud(line), 8)
    assert np.all(np.isinf(k))


# -- edges ---------------------------------------------------------------------------------


def test_plane_interior_not_edge():
    g = np.linspace(-1, 1, 41)
    xx, yy = np.meshgrid(g, g)
    pts = np.c_[xx.ravel(), yy.ravel(), np.zeros(xx.size)]
    pts[:, :2] += np.random.default_rng(1).uniform(-1e-3, 1e-3, (len(pts), 2))
    flags = detect_edges(PointCloud(pts), 16, np.pi / 2)
    interior = np.abs(pts[:, :2]).max(axis=1) < 0.85
    assert not flags[interior].any()


def test_half_plane_boundary_flagged(rng):
    pts = _plane(5000, rng)
    pts = pts[pts[:, 0] <= 0]
    boundary = np.array([[0.0, 0.0, 0.0]])
    pts = np.vstack([boundary, pts])
    flags = detect_edges(PointCloud(pts), 16, np.pi / 2)
    assert flags[0]
    # the exhaustive angular-gap computation agrees on the constructed neighbourhood
    nbrs = geom.knn_indices(pts, 16)[0, 1:]
    ang = np.sort(np.arctan2(pts[nbrs, 1], pts[nbrs, 0]))
    gaps = np.append(np.diff(ang), 2 * np.pi - (ang[-1] - ang[0]))
    assert gaps.max() > np.pi / 2


def test_box_crease_flagged_by_eigenvalues(rng):
    n = 4000
    a = np.c_[rng.uniform(0, 0.5, n), rng.uniform(-0.5, 0.5, n), np.zeros(n)]
    b = np.c_[np.zeros(n), rng.uniform(-0.5, 0.5, n), rng.uniform(0, 0.5, n)]
    crease = np.c_[np.zeros(1), np.zeros(1), np.zeros(1)]
    pts = np.vstack([crease, a, b])
    flags = detect_edges(PointCloud(pts), 16, np.pi)  # disable the gap criterion
    assert flags[0]
    evals = np.linalg.eigvalsh(np.cov(pts[geom.knn_indices(pts, 16)[0]].T, bias=True))
    assert evals[1] < 10 * evals[0]
    far = (pts[:, 0] > 0.1) & (pts[:, 0] < 0.4) & (np.abs(pts[:, 1]) < 0.4)
    assert flags[far].mean() < 0.05


def test_linear_neighbourhood_flagged():
    line = np.c_[np.linspace(0, 1, 50), np.zeros(50), np.zeros(50)]
    line[:, 1] += np.random.default_rng(0).normal(scale=1e-4, size=50)
    assert detect_edges(PointCloud(line), 8, np.pi).all()


def test_edges_rigid_invariance(rng):
    obj = _single_box((0.4, 0.3, 0.2))
    cloud = sample_surface(obj, obj.closed_state(), 3000, 2)
    flags = detect_edges(cloud, 16)
    for _ in range(3):
        pose = random_pose(rng)
        moved = detect_edges(PointCloud(pose.apply(cloud.points)), 16)
        assert np.mean(moved != flags) < 1e-3


def test_local_frames_shared_results_match(rng):
    pts = _sphere(1000, rng, 0.2)
    cloud = PointCloud(pts)
    frames = geom.local_frames(pts, 16)
    np.testing.assert_array_equal(detect_edges(cloud, 16, frames=frames), detect_edges(cloud, 16))
    np.testing.assert_array_equal(
        estimate_gaussian_curvature(cloud, 16, frames=frames), estimate_gaussian_curvature(cloud, 16)
    )
