import numpy as np
import pytest

from artiflow.camera import (
    CameraModel,
    DepthImage,
    backproject,
    default_camera,
    random_viewpoint,
    render_depth,
    write_pgm,
)
from artiflow.model import ArticulatedObject, JointKind, JointSpec, LinkSpec, Mesh, box_mesh
from artiflow.procgen import ProcKind, ProcSpec, generate
from artiflow.transforms import Pose


def _object(meshes):
    links = [LinkSpec(f"l{i}", m) for i, m in enumerate(meshes)]
    joints = [
        JointSpec(f"j{i}", JointKind.PRISMATIC, "l0", f"l{i}", Pose(), (1, 0, 0), (0, 1))
        for i in range(1, len(meshes))
    ]
    return ArticulatedObject(links, joints, "l0")


def _state(obj):
    return obj.closed_state()


def _triangle(z):
    return Mesh([[-0.5, -0.5, z], [0.5, -0.5, z], [0.0, 0.5, z]], [[0, 1, 2]])


def _point_box_distance(points, extents, center):
    """Unsigned distance from points to the surface of an axis-aligned box."""
    h = np.asarray(extents) / 2
    d = np.abs(points - center) - h
    outside = np.linalg.norm(np.maximum(d, 0), axis=1)
    inside = np.minimum(d.max(axis=1), 0)
    return np.abs(outside + inside)


def test_camera_invariants():
    with pytest.raises(ValueError):
        CameraModel(fx=0)
    with pytest.raises(ValueError):
        CameraModel(cx=300)


def test_triangle_on_axis_depth():
    obj = _object([_triangle(1.0)])
    cam = CameraModel()
    img = render_depth(obj, _state(obj), cam)
    assert img.depth[128, 128] == pytest.approx(1.0, abs=1e-6)
    assert img.link_ids[128, 128] == 0
    assert np.all(img.depth[np.isfinite(img.depth)] > 0)


def test_triangle_behind_camera():
    obj = _object([_triangle(-1.0)])
    img = render_depth(obj, _state(obj), CameraModel())
    assert not img.foreground.any()
    assert backproject(img, CameraModel()).is_valid is False


def test_triangle_straddling_near_plane():
    mesh = Mesh([[-0.2, -0.2, -1.0], [0.2, -0.2, 2.0], [0.0, 0.3, 2.0]], [[0, 1, 2]])
    obj = _object([mesh])
    img = render_depth(obj, _state(obj), CameraModel())
    assert img.foreground.any() and np.all(img.depth[img.foreground] > 1e-3)


def test_zero_area_object_is_background():
    flat = Mesh([[0, 0, 1], [1, 0, 1], [2, 0, 1]], [[0, 1, 2]])
    obj = _object([flat])
    assert not render_depth(obj, _state(obj), CameraModel()).foreground.any()


def test_principal_point_backprojection():
    depth = np.full((256, 256), np.inf)
    depth[128, 128] = 2.0
    cloud = backproject(DepthImage(depth), CameraModel())
    np.testing.assert_allclose(cloud.points, [[0, 0, 2.0]])
    cam = CameraModel.look_at((0, -3, 0), (0, 0, 0))
    world = backproject(DepthImage(depth), cam)
    np.testing.assert_allclose(world.points, [[0, -1.0, 0]], atol=1e-12)


def test_render_backproject_box_surface():
    extents, center = (0.4, 0.3, 0.2), (0.1, -0.05, 0.0)
    obj = _object([box_mesh(extents, center)])
    cam = CameraModel.look_at((1.2, 0.8, 0.9), center)
    img = render_depth(obj, _state(obj), cam)
    cloud = backproject(img, cam)
    assert len(cloud) > 500
    assert _point_box_distance(cloud.points, extents, center).max() < 1e-6
    assert set(cloud.link_labels) == {"l0"}


def test_occlusion_hides_box_behind_wall():
    wall = box_mesh((0.05, 2.0, 2.0), (1.0, 0, 0))
    small = box_mesh((0.1, 0.1, 0.1), (2.0, 0, 0))
    obj = _object([wall, small])
    cam = CameraModel.look_at((-1.0, 0, 0), (1, 0, 0))
    cloud = backproject(render_depth(obj, _state(obj), cam), cam)
    assert len(cloud) > 0 and not np.any(cloud.link_labels == "l1")
    alone = _object([small])
    assert len(backproject(render_depth(alone, _state(alone), cam), cam)) > 0


def test_self_occlusion_only_camera_facing_faces():
    extents = np.array([0.4, 0.3, 0.2])
    obj = _object([box_mesh(extents)])
    eye = np.array([1.0, 0.7, 0.6])
    cam = CameraModel.look_at(eye, (0, 0, 0))
    cloud = backproject(render_depth(obj, _state(obj), cam), cam)
    # recover each point's face normal from which box face it lies on
    rel = np.abs(cloud.points) / (extents / 2)
    axis = np.argmax(rel, axis=1)
    normals = np.zeros_like(cloud.points)
    normals[np.arange(len(axis)), axis] = np.sign(cloud.points[np.arange(len(axis)), axis])
    view = cloud.points - eye
    assert np.all(np.einsum("ij,ij->i", normals, view) < 0)


def test_resolution_convergence_same_visible_links():
    obj = generate(ProcSpec(ProcKind.CABINET_2JOINT, seed=4))
    cam = default_camera(obj)
    for state in (obj.closed_state(), {"door_hinge": 1.0, "drawer_slide": 0.1}):
        lo = render_depth(obj, state, cam.with_resolution(64, 64))
        hi = render_depth(obj, state, cam.with_resolution(128, 128))
        seen = lambda img: {img.link_names[i] for i in np.unique(img.link_ids) if i >= 0}
        assert seen(lo) == seen(hi)


def test_random_viewpoint_properties():
    fixed = random_viewpoint(3, (0.5, 0.5), (0.2, 0.2), (1.5, 1.5), (0.1, 0.2, 0.3))
    expected = np.array([0.1, 0.2, 0.3]) + 1.5 * np.array(
        [np.cos(0.5) * np.cos(0.2), np.cos(0.5) * np.sin(0.2), np.sin(0.5)]
    )
    np.testing.assert_allclose(fixed.position, expected, atol=1e-12)
    other = random_viewpoint(99, (0.5, 0.5), (0.2, 0.2), (1.5, 1.5), (0.1, 0.2, 0.3))
    np.testing.assert_allclose(other.extrinsics.matrix, fixed.extrinsics.matrix)
    a, b = random_viewpoint(7), random_viewpoint(7)
    np.testing.assert_array_equal(a.extrinsics.matrix, b.extrinsics.matrix)
    with pytest.raises(ValueError):
        random_viewpoint(0, elevation_range=(1.0, 0.5))


def test_random_viewpoint_azimuth_statistics():
    rng = np.random.default_rng(0)
    lo, hi = -np.pi / 3, np.pi / 3
    az = []
    for _ in range(1000):
        pos = random_viewpoint(rng, azimuth_range=(lo, hi)).position
        az.append(np.arctan2(pos[1], pos[0]))
    sigma = (hi - lo) / np.sqrt(12) / np.sqrt(1000)
    assert abs(np.mean(az) - 0.5 * (lo + hi)) < 3 * sigma


def test_camera_looks_at_target():
    cam = random_viewpoint(5, lookat=(0.3, 0.1, 0.2))
    target_cam = cam.extrinsics.apply(np.array([0.3, 0.1, 0.2]))
    np.testing.assert_allclose(target_cam[:2], 0.0, atol=1e-12)
    assert target_cam[2] > 0


def test_pgm_export(tmp_path):
    obj = _object([_triangle(1.0)])
    img = render_depth(obj, _state(obj), CameraModel(width=16, height=16, cx=8, cy=8, fx=16, fy=16))
    path = write_pgm(img, tmp_path / "d.pgm")
    lines = path.read_text().splitlines()
    assert lines[:3] == ["P2", "16 16", "65535"]
    vals = np.array([int(v) for line in lines[3:] for v in line.split()]).reshape(16, 16)
    assert vals[8, 8] == 1000 and vals[15, 0] == 0
