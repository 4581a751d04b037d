"""
Hallway centerline helpers: where "the middle of the corridor" is, and where to
head next along it when the final goal is still outside mapped space.
"""

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from src.models import ConfigError, Vec3, vec3


@dataclass(frozen=True)
class CorridorSpec:
    """Centerline segment in the horizontal plane (z components are ignored)"""
    start: Vec3 = (0.5, 0.0, 0.0)
    end: Vec3 = (9.5, 0.0, 0.0)

    def __post_init__(self):
        if np.allclose(np.array(self.start[:2]), np.array(self.end[:2])):
            raise ConfigError("corridor start and end must differ horizontally")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.array(self.end[:2]) - np.array(self.start[:2])))

    def fraction_of(self, point: Iterable[float]) -> float:
        """Clamped position of the point's projection along the segment, in [0, 1]"""
        a = np.array(self.start[:2])
        ab = np.array(self.end[:2]) - a
        p = np.asarray(tuple(point), dtype=float)[:2]
        return float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))

    def point_at(self, fraction: float, altitude: float) -> Vec3:
        a = np.array(self.start[:2])
        b = np.array(self.end[:2])
        x, y = a + (b - a) * fraction
        return vec3((x, y, altitude))


def corridor_centerline(corridor: CorridorSpec, position: Iterable[float], altitude: float) -> Vec3:
    """Nearest centerline point to `position`, at `altitude`"""
    return corridor.point_at(corridor.fraction_of(position), altitude)


def corridor_candidates(corridor: CorridorSpec, position: Iterable[float], goal: Iterable[float],
                        altitude: float, spacing: float = 0.25, min_advance: float = 0.5) -> List[Vec3]:
    """
    Centerline points between the vehicle and the goal, farthest first, starting
    at least `min_advance` meters ahead of the vehicle's projection.
    """
    here = corridor.fraction_of(position)
    there = corridor.fraction_of(goal)
    if np.isclose(here, there):
        return []
    direction = 1.0 if there > here else -1.0
    span = abs(there - here) * corridor.length
    count = int(np.floor((span - min_advance) / spacing + 1e-9))
    if count < 0:
        return []
    points = []
    for k in range(count + 1):
        distance = span - k * spacing
        points.append(corridor.point_at(here + direction * distance / corridor.length, altitude))
    return points
