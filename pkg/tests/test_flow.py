import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artiflow.errors import DegenerateGeometryError, StateError
from artiflow.flow import FlowField, fd_flow_oracle, flow_deviation, flow_error, gt_flow
from artiflow.geom import PointCloud, sample_surface
from artiflow.model import scale_state, transform_object
from artiflow.procgen import ProcKind, ProcSpec, generate
from artiflow.transforms import Pose

from conftest import make_door, make_drawer, random_pose


def test_drawer_flow_is_unit_axis(drawer):
    cloud = sample_surface(drawer, {"slide": 0.2}, 400, 0)
    f = gt_flow(drawer, {"slide": 0.2}, cloud, "slide")
    child = cloud.link_labels == "drawer"
    np.testing.assert_array_equal(f.vectors[child], np.tile([1.0, 0, 0], (child.sum(), 1)))
    assert np.all(f.vectors[~child] == 0)


def test_door_radii_examples():
    door = make_door()
    pts = np.array([[0.0, 0.0, 0.1], [0.2, 0.0, 0.0], [0.4, 0.0, 0.2], [1.0, 1.0, 1.0]])
    cloud = PointCloud(pts, link_labels=np.array(["door", "door", "door", "frame"]))
    f = gt_flow(door, {"hinge": 0.0}, cloud, "hinge")
    np.testing.assert_array_equal(f.vectors[0], 0.0)  # on the hinge line
    np.testing.assert_allclose(f.magnitudes[1:3], [0.5, 1.0], atol=1e-15)
    np.testing.assert_allclose(f.vectors[1], [0, 0.5, 0], atol=1e-15)  # tangent to its circle
    np.testing.assert_allclose(f.vectors[2], [0, 1.0, 0], atol=1e-15)
    assert np.all(f.vectors[3] == 0)
    fd = fd_flow_oracle(door, {"hinge": 0.0}, cloud, "hinge")
    dev = flow_deviation(f, fd)
    assert dev.max_angle < 1e-4 and dev.max_relative_magnitude < 1e-4


def test_all_points_on_axis_is_degenerate():
    door = make_door()
    cloud = PointCloud([[0, 0, 0.1], [0, 0, 0.2]], link_labels=np.array(["door", "door"]))
    with pytest.raises(DegenerateGeometryError):
        gt_flow(door, {"hinge": 0.0}, cloud, "hinge")


def test_label_and_joint_validation(door):
    cloud = PointCloud([[0, 0, 0]], link_labels=np.array(["ghost"]))
    with pytest.raises(ValueError):
        gt_flow(door, {"hinge": 0.0}, cloud, "hinge")
    with pytest.raises(KeyError):
        gt_flow(door, {"hinge": 0.0}, PointCloud([[0, 0, 0]], link_labels=np.array(["door"])), "nope")


@pytest.mark.parametrize("kind", list(ProcKind))
def test_magnitude_bound(kind, rng):
    obj = generate(ProcSpec(kind, seed=5))
    for _ in range(5):
        s = obj.random_state(rng)
        cloud = sample_surface(obj, s, 1000, int(rng.integers(1000)))
        for jid, j in obj.joints.items():
            f = gt_flow(obj, s, cloud, jid)
            child = cloud.link_labels == j.child_link
            assert f.magnitudes.max() <= 1 + 1e-9
            assert f.magnitudes[child].max() == pytest.approx(1.0, abs=1e-6)
            assert np.all(f.vectors[~child] == 0)


def test_prismatic_oracle_exact(rng):
    for seed in range(10):
        axis = rng.normal(size=3)
        obj = transform_object(make_drawer(axis=axis / np.linalg.norm(axis)), random_pose(rng), 1.3)
        s = obj.random_state(rng)
        cloud = sample_surface(obj, s, 300, seed)
        gt = gt_flow(obj, s, cloud, "slide")
        for delta in (1e-6, 1e-3, 0.05):
            fd = fd_flow_oracle(obj, s, cloud, "slide", delta)
            assert np.abs(gt.vectors - fd.vectors).max() <= 1e-12


def test_oracle_uses_backward_step_at_upper_limit():
    door = make_door()
    cloud = sample_surface(door, {"hinge": np.pi / 2}, 300, 1)
    gt = gt_flow(door, {"hinge": np.pi / 2}, cloud, "hinge")
    fd = fd_flow_oracle(door, {"hinge": np.pi / 2}, cloud, "hinge", 1e-6)
    assert flow_deviation(gt, fd).max_angle < 1e-4


def test_oracle_errors(door):
    cloud = sample_surface(door, {"hinge": 0.1}, 50, 0)
    with pytest.raises(DegenerateGeometryError):
        fd_flow_oracle(door, {"hinge": 0.1}, cloud, "hinge", 0.0)
    tiny = make_door(limits=(0.0, 1e-7))
    with pytest.raises(StateError):
        fd_flow_oracle(tiny, {"hinge": 0.0}, cloud, "hinge", 1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), kind=st.sampled_from(list(ProcKind)))
def test_oracle_agreement_property(seed, kind):
    rng = np.random.default_rng(seed)
    obj = transform_object(generate(ProcSpec(kind, seed=seed)), random_pose(rng), float(rng.uniform(0.5, 2)))
    s = obj.random_state(rng)
    cloud = sample_surface(obj, s, 300, seed)
    for jid, j in obj.joints.items():
        if not (cloud.link_labels == j.child_link).any():
            continue
        dev = flow_deviation(gt_flow(obj, s, cloud, jid), fd_flow_oracle(obj, s, cloud, jid, 1e-6))
        assert dev.max_angle < 1e-4 and dev.max_relative_magnitude < 1e-4


# -- invariances ----------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), kind=st.sampled_from(list(ProcKind)), scale=st.floats(0.1, 10))
def test_translation_scale_rotation(seed, kind, scale):
    rng = np.random.default_rng(seed)
    obj = generate(ProcSpec(kind, seed=seed))
    s = obj.random_state(rng)
    cloud = sample_surface(obj, s, 300, seed)
    t = Pose(rng.uniform(-5, 5, 3))
    pose = random_pose(rng)
    moved = transform_object(obj, t)
    scaled = transform_object(obj, Pose(), scale)
    rotated = transform_object(obj, pose)
    for jid in obj.joints:
        base = gt_flow(obj, s, cloud, jid).vectors
        a = gt_flow(moved, s, PointCloud(t.apply(cloud.points), cloud.link_labels), jid).vectors
        b = gt_flow(scaled, scale_state(obj, s, scale), PointCloud(cloud.points * scale, cloud.link_labels), jid).vectors
        c = gt_flow(rotated, s, PointCloud(pose.apply(cloud.points), cloud.link_labels), jid).vectors
        assert np.abs(a - base).max() < 1e-9
        assert np.abs(b - base).max() < 1e-9
        assert np.abs(c - pose.apply_vector(base)).max() < 1e-9


# -- flow error ----------------------------------------------------------------------------


def test_flow_error_examples(rng):
    gt = FlowField(rng.normal(size=(50, 3)), "j")
    unit = FlowField(gt.vectors / gt.magnitudes[:, None], "j")
    r = flow_error(unit, unit)
    assert (r.mean_l2, r.max_l2, r.mean_cosine_distance) == (0.0, 0.0, 0.0)
    r = flow_error(FlowField(np.zeros((50, 3)), "j"), unit)
    assert r.mean_l2 == pytest.approx(1.0)
    r = flow_error(FlowField(-unit.vectors, "j"), unit)
    assert r.mean_l2 == pytest.approx(2.0) and r.mean_cosine_distance == pytest.approx(2.0)
    assert r.averaging == "per-point"
    with pytest.raises(ValueError):
        flow_error(FlowField(np.zeros((3, 3)), "j"), unit)


def test_flow_error_ignores_static_points_for_cosine():
    gt = FlowField([[1, 0, 0], [0, 0, 0]], "j")
    pred = FlowField([[1, 0, 0], [0, 1, 0]], "j")
    r = flow_error(pred, gt)
    assert r.mean_cosine_distance == 0.0
    assert r.mean_l2 == pytest.approx(0.5) and r.max_l2 == pytest.approx(1.0)
