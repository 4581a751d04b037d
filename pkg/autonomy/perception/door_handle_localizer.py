"""
Door handle localization from a depth frame and detector boxes.

Pipeline: split the depth image into handle and door point clouds using the
detection boxes, fit the door plane with RANSAC, project the handle centroid
onto that plane and push it back out by a constant offset along the normal,
then place the nozzle a fixed standoff in front of the handle.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, NamedTuple, Optional, Tuple

import numpy as np

from simulation.sensors import DepthImage, Detection, DetectionClass, depth_to_pointcloud
from src.models import ConfigError, PointCloud, Pose, PreconditionError, SpraySimError, Vec3, vec3, yaw_rotation

logger = logging.getLogger(__name__)

DEFAULT_HANDLE_OFFSET = 0.06
MIN_HORIZONTAL_NORMAL = 0.1


class PerceptionError(SpraySimError):
    """Base class for localization failures"""


class TooFewPointsError(PerceptionError):
    pass


class PlaneFitError(PerceptionError):
    """No plane hypothesis gathered enough inliers"""


class EmptyCloudError(PerceptionError):
    pass


class VerticalNormalError(PerceptionError):
    """Door normal has almost no horizontal component; no yaw can face it"""


class LocalizationMethod(Enum):
    PROJECTED = "projected"
    RAW_CENTROID = "raw_centroid"


@dataclass(frozen=True)
class RansacParams:
    threshold: float = 0.02
    iterations: int = 200
    min_inlier_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.threshold <= 0:
            raise ConfigError("ransac threshold must be > 0")
        if self.iterations <= 0:
            raise ConfigError("ransac iterations must be > 0")
        if not 0.0 < self.min_inlier_fraction <= 1.0:
            raise ConfigError("ransac min_inlier_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Plane:
    """{x : normal . x = d}, normal facing the sensor that observed it"""
    normal: Vec3
    d: float
    inlier_count: int = 0

    @property
    def n(self) -> np.ndarray:
        return np.array(self.normal)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.n - self.d

    def project(self, point: np.ndarray) -> np.ndarray:
        return np.asarray(point, dtype=float) - self.signed_distance(point) * self.n


@dataclass(frozen=True)
class HandleEstimate:
    position: Vec3
    plane: Plane
    point_count: int


@dataclass(frozen=True)
class SprayPose:
    nozzle_position: Vec3
    heading: Vec3  # unit, horizontal, pointing from nozzle to handle
    vehicle_pose: Pose

    @property
    def nozzle_pose(self) -> Pose:
        return Pose(self.nozzle_position, self.vehicle_pose.yaw)


class SegmentedRegions(NamedTuple):
    handle: PointCloud
    door: PointCloud

    @property
    def handle_empty(self) -> bool:
        return len(self.handle) == 0

    @property
    def door_empty(self) -> bool:
        return len(self.door) == 0


def pair_detections(detections: Iterable[Detection]) -> List[Tuple[Detection, Detection]]:
    """(door, handle) pairs whose handle box center falls inside the door box, largest handle first"""
    detections = list(detections)
    doors = [d for d in detections if d.kind is DetectionClass.DOOR]
    handles = sorted((d for d in detections if d.kind is DetectionClass.HANDLE),
                     key=lambda d: d.box.area, reverse=True)
    pairs = []
    for handle in handles:
        u, v = handle.box.center
        for door in doors:
            if door.box.contains(u, v):
                pairs.append((door, handle))
                break
    return pairs


def segment_regions(img: DepthImage, detections: Iterable[Detection], stride: int = 1,
                    pair: Optional[Tuple[Detection, Detection]] = None) -> SegmentedRegions:
    """World points inside the handle box, and inside the door box minus the handle box"""
    if pair is None:
        detections = list(detections)
        kinds = {d.kind for d in detections}
        if kinds != {DetectionClass.DOOR, DetectionClass.HANDLE}:
            raise PreconditionError("need at least one door and one handle detection")
        pairs = pair_detections(detections)
        if not pairs:
            raise PreconditionError("no handle box lies inside a door box")
        pair = pairs[0]
    door, handle = pair
    h, w = img.depth.shape
    handle_mask = handle.box.mask(w, h)
    door_mask = door.box.mask(w, h) & ~handle_mask
    regions = SegmentedRegions(
        depth_to_pointcloud(img, stride, mask=handle_mask),
        depth_to_pointcloud(img, stride, mask=door_mask),
    )
    if regions.handle_empty:
        logger.debug("[PERCEPTION] Handle region has no depth returns")
    return regions


def fit_door_plane(cloud: PointCloud, sensor_origin: Iterable[float],
                   params: RansacParams = RansacParams()) -> Plane:
    points = np.asarray(cloud, dtype=float).reshape(-1, 3)
    n_points = len(points)
    if n_points < 3:
        raise TooFewPointsError(f"plane fit needs 3 points, got {n_points}")

    rng = np.random.default_rng(params.seed)
    best_count = 0
    for _ in range(params.iterations):
        sample = points[rng.choice(n_points, size=3, replace=False)]
        normal = np.cross(sample[1] - sample[0], sample[2] - sample[0])
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue  # collinear sample
        normal /= norm
        inliers = np.abs((points - sample[0]) @ normal) <= params.threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count, best_inliers = count, inliers

    if best_count == 0:
        raise PlaneFitError("every RANSAC sample was degenerate")
    if best_count / n_points < params.min_inlier_fraction:
        raise PlaneFitError(f"best plane explains {best_count}/{n_points} points")

    # least-squares refit on the inliers
    support = points[best_inliers]
    centroid = support.mean(axis=0)
    _, _, vt = np.linalg.svd(support - centroid, full_matrices=False)
    normal = vt[-1]
    if np.dot(normal, np.asarray(tuple(sensor_origin), dtype=float) - centroid) < 0:
        normal = -normal
    d = float(normal @ centroid)
    inlier_count = int((np.abs(points @ normal - d) <= params.threshold).sum())
    return Plane(vec3(normal), d, inlier_count)


def localize_handle(cloud: PointCloud, plane: Plane,
                    handle_offset: float = DEFAULT_HANDLE_OFFSET) -> HandleEstimate:
    """Project the handle centroid onto the door plane, then offset along the normal"""
    points = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if not len(points):
        raise EmptyCloudError("handle cloud is empty")
    position = plane.project(points.mean(axis=0)) + handle_offset * plane.n
    return HandleEstimate(vec3(position), plane, len(points))


def raw_centroid_estimate(cloud: PointCloud, plane: Plane) -> HandleEstimate:
    """Handle position taken as the plain centroid, without the plane projection"""
    points = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if not len(points):
        raise EmptyCloudError("handle cloud is empty")
    return HandleEstimate(vec3(points.mean(axis=0)), plane, len(points))


def estimate_handle(cloud: PointCloud, plane: Plane, handle_offset: float,
                    method: LocalizationMethod = LocalizationMethod.PROJECTED) -> HandleEstimate:
    if method is LocalizationMethod.RAW_CENTROID:
        return raw_centroid_estimate(cloud, plane)
    return localize_handle(cloud, plane, handle_offset)


def horizontal_normal(plane: Plane) -> np.ndarray:
    n = plane.n.copy()
    n[2] = 0.0
    norm = float(np.linalg.norm(n))
    if norm < MIN_HORIZONTAL_NORMAL:
        raise VerticalNormalError(f"door normal {plane.normal} is nearly vertical")
    return n / norm


def compute_spray_pose(est: HandleEstimate, standoff: float,
                       nozzle_offset: Iterable[float]) -> SprayPose:
    """
    Nozzle `standoff` meters in front of the handle along the horizontal door
    normal, facing it; the vehicle pose is backed out through the nozzle offset.
    """
    if standoff <= 0:
        raise PreconditionError("standoff must be > 0")
    n_h = horizontal_normal(est.plane)
    nozzle = np.array(est.position) + standoff * n_h
    heading = -n_h
    yaw = math.atan2(heading[1], heading[0])
    vehicle = nozzle - yaw_rotation(yaw) @ np.asarray(tuple(nozzle_offset), dtype=float)
    return SprayPose(vec3(nozzle), vec3(heading), Pose(vec3(vehicle), yaw))
