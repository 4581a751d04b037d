import math
from dataclasses import replace

import numpy as np
import pytest

from autonomy.perception.door_handle_localizer import (
    EmptyCloudError,
    HandleEstimate,
    Plane,
    RansacParams,
    TooFewPointsError,
    VerticalNormalError,
    compute_spray_pose,
    estimate_handle,
    fit_door_plane,
    localize_handle,
    pair_detections,
    raw_centroid_estimate,
    LocalizationMethod,
    segment_regions,
)
from autonomy.perception.handle_tracker import HandleTracker
from simulation.scene import DoorSpec, HandleSpec, SceneModel, default_handle_extents
from simulation.sensors import (
    NO_RETURN,
    CameraIntrinsics,
    DepthImage,
    Detection,
    DetectionClass,
    PixelBox,
    SensorNoise,
    detect,
    render_depth,
)
from src.models import Box, ConfigError, Pose, PreconditionError
from tests.conftest import assert_vec

INTR = CameraIntrinsics()
X_PLANE = Plane((1.0, 0.0, 0.0), 0.0)


@pytest.fixture
def door_scene() -> SceneModel:
    """Door in the face of a wall at x = 0, looking back down -x"""
    door = DoorSpec("d1", (0.0, 0.0, 1.0), 0.9, 2.0, (-1.0, 0.0, 0.0))
    handle = HandleSpec("d1-h0", "d1", (-0.06, 0.35, 1.0), default_handle_extents(door))
    return SceneModel(
        bounds=Box((-4.0, -4.0, -1.0), (1.0, 4.0, 3.0)),
        obstacles=(Box((0.0, -3.0, 0.0), (0.3, 3.0, 3.0)),),
        doors=(door,),
        handles=(handle,),
    )


CAMERA = Pose((-2.5, 0.35, 1.0), 0.0)


def _observe(scene, noise, seed, pose=CAMERA):
    detections = detect(scene, pose, INTR, SensorNoise.zero(), seed=0)
    door = next(d for d in detections if d.kind is DetectionClass.DOOR)
    img = render_depth(scene, pose, INTR, noise, seed=seed, regions=[door.box])
    return img, detections


def test_pairs_handle_with_enclosing_door():
    door = Detection(DetectionClass.DOOR, PixelBox(100, 50, 300, 400))
    inner = Detection(DetectionClass.HANDLE, PixelBox(200, 200, 220, 210))
    outer = Detection(DetectionClass.HANDLE, PixelBox(500, 200, 520, 210))
    assert pair_detections([door, inner, outer]) == [(door, inner)]


def test_door_region_dominates(door_scene):
    img, detections = _observe(door_scene, SensorNoise.zero(), seed=0)
    regions = segment_regions(img, detections)
    assert not regions.handle_empty
    assert len(regions.door) > 20 * len(regions.handle)


def test_sentinel_handle_box_is_flagged():
    depth = np.full((INTR.height, INTR.width), NO_RETURN)
    depth[:, :100] = 2.0
    img = DepthImage(depth, INTR, Pose((0.0, 0.0, 1.0)))
    door = Detection(DetectionClass.DOOR, PixelBox(0, 0, 300, 400))
    handle = Detection(DetectionClass.HANDLE, PixelBox(200, 200, 220, 210))
    regions = segment_regions(img, [door, handle])
    assert regions.handle_empty
    assert not regions.door_empty


def test_disjoint_boxes_are_a_precondition_error():
    img = DepthImage(np.full((INTR.height, INTR.width), 2.0), INTR, Pose((0.0, 0.0, 1.0)))
    door = Detection(DetectionClass.DOOR, PixelBox(0, 0, 100, 100))
    handle = Detection(DetectionClass.HANDLE, PixelBox(200, 200, 220, 220))
    with pytest.raises(PreconditionError):
        segment_regions(img, [door, handle])


def test_exact_plane_fit_faces_sensor():
    yy, zz = np.meshgrid(np.linspace(-1, 1, 15), np.linspace(0, 2, 15))
    cloud = np.column_stack([np.full(yy.size, 3.0), yy.ravel(), zz.ravel()])
    plane = fit_door_plane(cloud, (0.0, 0.0, 0.0))
    assert_vec(plane.normal, (-1.0, 0.0, 0.0), atol=1e-6)
    assert plane.d == pytest.approx(-3.0, abs=1e-6)
    assert plane.inlier_count == len(cloud)


def test_two_points_are_too_few():
    with pytest.raises(TooFewPointsError):
        fit_door_plane(np.zeros((2, 3)), (1.0, 0.0, 0.0))


def test_ransac_params_validation():
    with pytest.raises(ConfigError):
        RansacParams(threshold=0.0)


def _noisy_plane(seed: int):
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0, 2 * math.pi)
    normal = np.array([math.cos(angle), math.sin(angle), 0.0])
    u = np.array([-normal[1], normal[0], 0.0])
    s, t = rng.uniform(-0.5, 0.5, 400), rng.uniform(0.0, 2.0, 400)
    inliers = 2.0 * normal + s[:, None] * u + t[:, None] * np.array([0, 0, 1.0])
    inliers += rng.normal(0.0, 0.005, inliers.shape)
    outliers = rng.uniform(-1.0, 3.0, (100, 3))
    return np.vstack([inliers, outliers]), normal


@pytest.mark.slow
def test_ransac_tolerates_outliers():
    passes = 0
    for seed in range(100):
        cloud, normal = _noisy_plane(seed)
        plane = fit_door_plane(cloud, (0.0, 0.0, 1.0), RansacParams(seed=seed))
        angle = math.degrees(math.acos(min(1.0, abs(float(plane.n @ normal)))))
        passes += angle < 1.0
    assert passes >= 95


def test_projected_centroid_with_offset():
    est = localize_handle(np.array([[0.05, 0.20, 1.00]]), X_PLANE, 0.06)
    assert_vec(est.position, (0.06, 0.20, 1.00))
    assert est.point_count == 1


def test_centroid_on_plane_without_offset():
    est = localize_handle(np.array([[0.0, 0.3, 0.9], [0.0, 0.5, 1.1]]), X_PLANE, 0.0)
    assert_vec(est.position, (0.0, 0.4, 1.0))


def test_empty_handle_cloud():
    with pytest.raises(EmptyCloudError):
        localize_handle(np.empty((0, 3)), X_PLANE)


def test_raw_centroid_method_skips_projection():
    cloud = np.array([[0.05, 0.20, 1.00]])
    est = estimate_handle(cloud, X_PLANE, 0.06, LocalizationMethod.RAW_CENTROID)
    assert_vec(est.position, (0.05, 0.20, 1.00))
    assert raw_centroid_estimate(cloud, X_PLANE) == est


def test_spray_pose_axis_aligned():
    est = HandleEstimate((0.0, 0.0, 1.0), X_PLANE, 10)
    pose = compute_spray_pose(est, 0.30, (0.20, 0.0, 0.0))
    assert_vec(pose.nozzle_position, (0.30, 0.0, 1.0))
    assert_vec(pose.vehicle_pose.position, (0.50, 0.0, 1.0), atol=1e-12)
    assert_vec(pose.heading, (-1.0, 0.0, 0.0))
    assert_vec(pose.nozzle_pose.position, pose.nozzle_position)


def test_spray_pose_uses_horizontal_normal():
    est = HandleEstimate((0.0, 0.0, 1.0), Plane((0.8, 0.0, 0.6), 0.6), 10)
    pose = compute_spray_pose(est, 0.30, (0.20, 0.0, 0.0))
    assert_vec(pose.nozzle_position, (0.30, 0.0, 1.0), atol=1e-12)
    assert_vec(pose.heading, (-1.0, 0.0, 0.0), atol=1e-12)


def test_spray_pose_preconditions():
    est = HandleEstimate((0.0, 0.0, 1.0), X_PLANE, 10)
    with pytest.raises(PreconditionError):
        compute_spray_pose(est, 0.0, (0.2, 0.0, 0.0))
    flat = HandleEstimate((0.0, 0.0, 1.0), Plane((0.0, 0.0, 1.0), 1.0), 10)
    with pytest.raises(VerticalNormalError):
        compute_spray_pose(flat, 0.3, (0.2, 0.0, 0.0))


def test_noiseless_render_localizes_handle(door_scene):
    img, detections = _observe(door_scene, SensorNoise.zero(), seed=0)
    regions = segment_regions(img, detections)
    plane = fit_door_plane(regions.door, CAMERA.position)
    assert_vec(plane.normal, (-1.0, 0.0, 0.0), atol=1e-6)
    est = localize_handle(regions.handle, plane, 0.06)
    truth = np.array(door_scene.handle("d1-h0").center)
    assert np.linalg.norm(np.array(est.position) - truth) < 0.03


@pytest.mark.slow
@pytest.mark.parametrize("sigma", [0.005, 0.01, 0.02])
def test_projection_reduces_variance_along_normal(door_scene, sigma):
    noise = replace(SensorNoise.zero(), depth_std=sigma)
    projected, raw = [], []
    for seed in range(200):
        img, detections = _observe(door_scene, noise, seed=seed)
        regions = segment_regions(img, detections, stride=2)
        plane = fit_door_plane(regions.door, CAMERA.position, RansacParams(seed=seed))
        projected.append(localize_handle(regions.handle, plane, 0.06).position[0])
        raw.append(raw_centroid_estimate(regions.handle, plane).position[0])
    assert np.std(projected) < np.std(raw)


def _estimate(x, y=0.0, z=1.0, normal=(1.0, 0.0, 0.0)):
    return HandleEstimate((x, y, z), Plane(normal, x - 0.06), 5)


def test_tracker_needs_a_full_window():
    tracker = HandleTracker(window=5, gate=0.3)
    for k in range(4):
        assert tracker.add(_estimate(1.0 + 0.01 * k))
        assert not tracker.stable
    assert tracker.add(_estimate(1.04))
    assert tracker.stable
    fused = tracker.fused()
    assert fused.position[0] == pytest.approx(1.02)
    assert fused.plane.d == pytest.approx(1.02 - 0.06)


def test_tracker_gates_outliers():
    tracker = HandleTracker(window=5, gate=0.3)
    tracker.add(_estimate(1.0))
    assert not tracker.add(_estimate(2.0))
    assert len(tracker.estimates) == 1


def test_tracker_restarts_after_repeated_rejections():
    tracker = HandleTracker(window=5, gate=0.3, max_rejections=3)
    tracker.add(_estimate(1.0))
    for _ in range(3):
        tracker.add(_estimate(3.0))
    np.testing.assert_allclose(tracker.running_mean(), (3.0, 0.0, 1.0))
    tracker.reset()
    assert tracker.fused() is None
    assert tracker.running_mean() is None
