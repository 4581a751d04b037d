"""
Shared geometric value types and the error hierarchy used across the simulator.
World frame is z-up, meters everywhere; heading is yaw about +z.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

Vec3 = Tuple[float, float, float]

# (N, 3) float64 array of world-frame points
PointCloud = np.ndarray


class SpraySimError(Exception):
    """Base class for every error raised by the simulator"""


class ConfigError(SpraySimError):
    """Invalid or unreadable configuration"""


class PreconditionError(SpraySimError):
    """An operation was called with inputs that violate its contract"""


class UnknownEntityError(SpraySimError):
    """Lookup of a door or handle id that does not exist"""


def vec3(values: Iterable[float]) -> Vec3:
    """Coerce any 3-sequence into a tuple of python floats"""
    items = tuple(float(v) for v in values)
    if len(items) != 3:
        raise ValueError(f"expected 3 components, got {len(items)}")
    return items


def unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return np.asarray(v, dtype=float) / norm


def wrap_angle(angle: float) -> float:
    """Wrap an angle to [-pi, pi)"""
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    """Rigid-body position plus heading (yaw) of the vehicle or one of its frames"""
    position: Vec3
    yaw: float = 0.0

    @property
    def xyz(self) -> np.ndarray:
        return np.array(self.position, dtype=float)

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])

    def to_world(self, local: Iterable[float]) -> np.ndarray:
        """Map a point given in this frame (x forward, y left, z up) into the world"""
        return self.xyz + yaw_rotation(self.yaw) @ np.asarray(local, dtype=float)

    def child(self, offset: Iterable[float]) -> "Pose":
        """Pose of a rigidly attached frame that shares this heading"""
        return Pose(vec3(self.to_world(offset)), self.yaw)

    @staticmethod
    def facing(position: Iterable[float], direction: Iterable[float]) -> "Pose":
        d = np.asarray(direction, dtype=float)
        return Pose(vec3(position), math.atan2(d[1], d[0]))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its min and max corners"""
    min: Vec3
    max: Vec3

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.min, self.max)):
            raise ValueError(f"box min {self.min} exceeds max {self.max}")

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.min) + np.array(self.max)) / 2.0

    @property
    def size(self) -> np.ndarray:
        return np.array(self.max) - np.array(self.min)

    @staticmethod
    def around(center: Iterable[float], extents: Iterable[float]) -> "Box":
        """Box from a center and full edge lengths"""
        c = np.asarray(center, dtype=float)
        half = np.asarray(extents, dtype=float) / 2.0
        return Box(vec3(c - half), vec3(c + half))

    def contains_box(self, other: "Box", tol: float = 1e-9) -> bool:
        return all(a - tol <= b for a, b in zip(self.min, other.min)) and all(
            a + tol >= b for a, b in zip(self.max, other.max)
        )

    def contains_point(self, p: Iterable[float], tol: float = 1e-9) -> bool:
        return all(lo - tol <= v <= hi + tol for lo, v, hi in zip(self.min, p, self.max))

    def overlaps(self, other: "Box") -> bool:
        """Strict interior overlap; touching faces do not count"""
        return all(
            a_lo < b_hi and b_lo < a_hi
            for a_lo, a_hi, b_lo, b_hi in zip(self.min, self.max, other.min, other.max)
        )
