"""
Simulated sensor suite: ray-cast depth camera, noisy tracking camera, and an
oracle door/handle detector standing in for the CNN.

Camera convention: pixel (u, v) looks along
    forward + (u - cx)/fx * right + (v - cy)/fy * down
so the pixel at (width // 2, height // 2) looks straight down the heading.
Depth is the range along the pixel ray; pixels without a return hold NO_RETURN.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from simulation.scene import SceneModel
from src.models import Box, PointCloud, Pose, PreconditionError, yaw_rotation

logger = logging.getLogger(__name__)

NO_RETURN = math.inf
DEFAULT_DETECTION_RANGE = 3.5
_EPS = 1e-9

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 640
    height: int = 480
    hfov: float = math.radians(87.0)
    vfov: float = math.radians(58.0)
    max_range: float = 6.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0.0 < self.hfov < math.pi and 0.0 < self.vfov < math.pi):
            raise ValueError("field of view must lie in (0, pi)")
        if self.max_range <= 0:
            raise ValueError("max range must be positive")

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0

    @property
    def fx(self) -> float:
        return self.cx / math.tan(self.hfov / 2.0)

    @property
    def fy(self) -> float:
        return self.cy / math.tan(self.vfov / 2.0)


@dataclass(frozen=True)
class SensorNoise:
    depth_std: float = 0.01
    pose_std: float = 0.005
    yaw_std: float = 0.002
    false_negative: float = 0.1
    bbox_jitter: float = 3.0
    # per-trial constant tracking-camera drift (horizontal translation and yaw)
    pose_bias_std: float = 0.05
    yaw_bias_std: float = 0.02

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"noise parameter {name} must be >= 0")
        if self.false_negative > 1.0:
            raise ValueError("false_negative is a probability")

    @staticmethod
    def zero() -> "SensorNoise":
        return SensorNoise(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class DepthImage:
    depth: np.ndarray  # (height, width), NO_RETURN where nothing was hit
    intrinsics: CameraIntrinsics
    pose: Pose  # camera pose the image is attributed to

    def with_pose(self, pose: Pose) -> "DepthImage":
        return DepthImage(self.depth, self.intrinsics, pose)


class DetectionClass(Enum):
    DOOR = "door"
    HANDLE = "handle"


class PixelBox(NamedTuple):
    """Pixel rectangle, u0/v0 inclusive and u1/v1 exclusive"""
    u0: int
    v0: int
    u1: int
    v1: int

    @property
    def center(self):
        return ((self.u0 + self.u1) / 2.0, (self.v0 + self.v1) / 2.0)

    @property
    def area(self) -> int:
        return max(0, self.u1 - self.u0) * max(0, self.v1 - self.v0)

    def contains(self, u: float, v: float) -> bool:
        return self.u0 <= u < self.u1 and self.v0 <= v < self.v1

    def mask(self, width: int, height: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[max(self.v0, 0):max(self.v1, 0), max(self.u0, 0):max(self.u1, 0)] = True
        return m


@dataclass(frozen=True)
class Detection:
    kind: DetectionClass
    box: PixelBox
    truth_id: str = field(default="", compare=False)  # simulation bookkeeping only


def camera_pose(vehicle: Pose, offset: Iterable[float]) -> Pose:
    return vehicle.child(offset)


# --- ray casting -----------------------------------------------------------

@lru_cache(maxsize=8)
def _body_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Unit ray per pixel in the camera body frame (x forward, y left, z up), shape (h, w, 3)"""
    u = np.arange(intr.width, dtype=float)
    v = np.arange(intr.height, dtype=float)
    uu, vv = np.meshgrid(u, v)
    rays = np.stack([np.ones_like(uu), -(uu - intr.cx) / intr.fx, -(vv - intr.cy) / intr.fy], axis=-1)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    rays.setflags(write=False)
    return rays


def pixel_rays(intr: CameraIntrinsics, pose: Pose) -> np.ndarray:
    """World-frame unit ray for every pixel, shape (h, w, 3)"""
    return _body_rays(intr) @ yaw_rotation(pose.yaw).T


def _cast_boxes(origin: np.ndarray, dirs: np.ndarray, boxes: Sequence[Box]) -> np.ndarray:
    """Nearest positive hit distance of each ray against a set of boxes (slab test)"""
    best = np.full(len(dirs), np.inf)
    if not len(boxes) or not len(dirs):
        return best
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        for box in boxes:
            t1 = (np.array(box.min) - origin) * inv
            t2 = (np.array(box.max) - origin) * inv
            t_near = np.fmax.reduce(np.fmin(t1, t2), axis=1)
            t_far = np.fmin.reduce(np.fmax(t1, t2), axis=1)
            hit = (t_far >= t_near) & (t_near > _EPS)
            best = np.where(hit & (t_near < best), t_near, best)
    return best


def _cast_doors(origin: np.ndarray, dirs: np.ndarray, scene: SceneModel) -> np.ndarray:
    best = np.full(len(dirs), np.inf)
    for door in scene.doors:
        n, u, v = door.frame()
        c = np.array(door.center)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((c - origin) @ n) / denom
            rel = origin + t[:, None] * dirs - c
            inside = (np.abs(rel @ u) <= door.width / 2.0) & (np.abs(rel @ v) <= door.height / 2.0)
        hit = inside & (t > _EPS) & (np.abs(denom) > _EPS)
        best = np.where(hit & (t < best), t, best)
    return best


def cast_rays(scene: SceneModel, origin: np.ndarray, dirs: np.ndarray,
              exclude: Sequence[Box] = ()) -> np.ndarray:
    """Distance to the first scene surface along each unit ray, inf on a miss"""
    boxes = [b for b in scene.solid_boxes() if b not in exclude]
    return np.minimum(_cast_boxes(origin, dirs, boxes), _cast_doors(origin, dirs, scene))


# --- depth camera ----------------------------------------------------------

def render_depth(scene: SceneModel, pose: Pose, intr: CameraIntrinsics, noise: SensorNoise,
                 seed: SeedLike, stride: int = 1,
                 regions: Optional[Sequence[PixelBox]] = None) -> DepthImage:
    """
    Render a range image from `pose`. Only pixels on the `stride` lattice (and inside
    `regions` when given) are cast; the rest hold NO_RETURN. Noise is drawn for the
    whole image so a pixel's value does not depend on which subset was cast.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not scene.bounds.contains_point(pose.position):
        raise PreconditionError(f"camera pose {pose.position} outside world bounds")
    rng = np.random.default_rng(seed)
    jitter = rng.standard_normal((intr.height, intr.width)) * noise.depth_std

    cast = np.zeros((intr.height, intr.width), dtype=bool)
    cast[::stride, ::stride] = True
    if regions is not None:
        roi = np.zeros_like(cast)
        for box in regions:
            roi |= box.mask(intr.width, intr.height)
        cast &= roi

    depth = np.full((intr.height, intr.width), NO_RETURN)
    rows, cols = np.nonzero(cast)
    if len(rows):
        dirs = pixel_rays(intr, pose)[rows, cols]
        ranges = cast_rays(scene, pose.xyz, dirs)
        valid = ranges <= intr.max_range
        noisy = np.clip(ranges + jitter[rows, cols], 1e-6, intr.max_range)
        depth[rows[valid], cols[valid]] = noisy[valid]
    return DepthImage(depth, intr, pose)


def depth_to_pointcloud(img: DepthImage, stride: int = 1,
                        mask: Optional[np.ndarray] = None) -> PointCloud:
    """World-frame point per finite-depth pixel on the stride lattice (optionally masked)"""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    select = np.zeros(img.depth.shape, dtype=bool)
    select[::stride, ::stride] = True
    select &= np.isfinite(img.depth)
    if mask is not None:
        select &= mask
    rows, cols = np.nonzero(select)
    if not len(rows):
        return np.empty((0, 3))
    dirs = pixel_rays(img.intrinsics, img.pose)[rows, cols]
    return img.pose.xyz + img.depth[rows, cols][:, None] * dirs


# --- detector --------------------------------------------------------------

def project_points(points: np.ndarray, pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates (u, v) and forward depth of world points, shape (N, 3)"""
    local = (np.asarray(points, dtype=float) - pose.xyz) @ yaw_rotation(pose.yaw)
    forward = np.maximum(local[:, 0], 1e-3)
    u = intr.cx - intr.fx * local[:, 1] / forward
    v = intr.cy - intr.fy * local[:, 2] / forward
    return np.stack([u, v, local[:, 0]], axis=1)


def _in_frustum(point: np.ndarray, pose: Pose, intr: CameraIntrinsics) -> bool:
    u, v, forward = project_points(point[None, :], pose, intr)[0]
    return forward > 0 and 0 <= u < intr.width and 0 <= v < intr.height


def _unoccluded(scene: SceneModel, pose: Pose, target: np.ndarray, exclude: Sequence[Box]) -> bool:
    offset = target - pose.xyz
    distance = float(np.linalg.norm(offset))
    if distance < _EPS:
        return True
    hit = cast_rays(scene, pose.xyz, (offset / distance)[None, :], exclude=exclude)[0]
    return hit >= distance - 1e-4


def _jittered_box(corners: np.ndarray, pose: Pose, intr: CameraIntrinsics,
                  jitter: np.ndarray) -> Optional[PixelBox]:
    uv = project_points(corners, pose, intr)
    u0 = math.floor(uv[:, 0].min() - jitter[0])
    v0 = math.floor(uv[:, 1].min() - jitter[1])
    u1 = math.ceil(uv[:, 0].max() + jitter[2])
    v1 = math.ceil(uv[:, 1].max() + jitter[3])
    box = PixelBox(max(u0, 0), max(v0, 0), min(u1, intr.width), min(v1, intr.height))
    return box if box.area > 0 else None


def _box_corners(box: Box) -> np.ndarray:
    lo, hi = box.min, box.max
    return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


def detect(scene: SceneModel, pose: Pose, intr: CameraIntrinsics, noise: SensorNoise,
           seed: SeedLike, max_range: float = DEFAULT_DETECTION_RANGE) -> List[Detection]:
    """
    Oracle detector. A door or handle is reported when its center is in view,
    within `max_range` and not occluded along the center ray. Boxes are dilated by
    |N(0, bbox_jitter)| per edge and each report is dropped with the false-negative
    probability. Handles are only reported alongside their parent door.
    """
    rng = np.random.default_rng(seed)
    detections: List[Detection] = []
    seen_doors = set()

    def visible(center: np.ndarray, exclude: Sequence[Box]) -> bool:
        return (
            np.linalg.norm(center - pose.xyz) <= max_range
            and _in_frustum(center, pose, intr)
            and _unoccluded(scene, pose, center, exclude)
        )

    for door in scene.doors:
        jitter = np.abs(rng.standard_normal(4)) * noise.bbox_jitter
        dropped = rng.random() < noise.false_negative
        own_handles = [h.box for h in scene.handles if h.door == door.id]
        if dropped or not visible(np.array(door.center), own_handles):
            continue
        box = _jittered_box(door.corners(), pose, intr, jitter)
        if box is not None:
            detections.append(Detection(DetectionClass.DOOR, box, door.id))
            seen_doors.add(door.id)

    for handle in scene.handles:
        jitter = np.abs(rng.standard_normal(4)) * noise.bbox_jitter
        dropped = rng.random() < noise.false_negative
        if dropped or handle.door not in seen_doors:
            continue
        if not visible(np.array(handle.center), [handle.box]):
            continue
        box = _jittered_box(_box_corners(handle.box), pose, intr, jitter)
        if box is not None:
            detections.append(Detection(DetectionClass.HANDLE, box, handle.id))
    return detections


# --- tracking camera -------------------------------------------------------

def draw_tracking_bias(noise: SensorNoise, seed: SeedLike) -> Pose:
    """Constant horizontal offset and yaw drift of the tracking camera for one trial"""
    rng = np.random.default_rng(seed)
    bx, by = rng.standard_normal(2) * noise.pose_bias_std
    return Pose((float(bx), float(by), 0.0), float(rng.standard_normal() * noise.yaw_bias_std))


def pose_estimate(true_pose: Pose, noise: SensorNoise, seed: SeedLike,
                  bias: Optional[Pose] = None) -> Pose:
    """True pose perturbed by zero-mean Gaussian noise (plus an optional constant bias)"""
    rng = np.random.default_rng(seed)
    delta = rng.standard_normal(3) * noise.pose_std
    dyaw = rng.standard_normal() * noise.yaw_std
    position = true_pose.xyz + delta
    yaw = true_pose.yaw + dyaw
    if bias is not None:
        position = position + bias.xyz
        yaw += bias.yaw
    return Pose(tuple(float(p) for p in position), float(yaw))
