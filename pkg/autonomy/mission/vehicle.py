"""
First-order kinematic stand-in for the flight controller: the vehicle moves
straight at bounded speed towards its current waypoint and turns at bounded
yaw rate towards its commanded heading.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from src.models import ConfigError, Pose, Vec3, vec3, wrap_angle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VehicleParams:
    max_speed: float = 0.5
    max_yaw_rate: float = 0.8
    half_extents: Vec3 = (0.35, 0.35, 0.15)
    nozzle_offset: Vec3 = (0.40, 0.0, 0.0)  # nozzle tip in the body frame
    camera_offset: Vec3 = (0.15, 0.0, 0.05)
    arrival_tolerance: float = 0.02
    planning_margin: float = 0.10  # added to the half extents for planning
    hold_jitter: float = 0.015  # per-tick position disturbance while holding to spray

    def __post_init__(self):
        if self.max_speed < 0 or self.max_yaw_rate < 0:
            raise ConfigError("vehicle speed limits must be >= 0")
        if any(h <= 0 for h in self.half_extents):
            raise ConfigError("vehicle half_extents must be > 0")
        if self.arrival_tolerance <= 0 or self.planning_margin < 0 or self.hold_jitter < 0:
            raise ConfigError("vehicle tolerances must be positive")

    @property
    def planning_extents(self) -> Vec3:
        return vec3(np.array(self.half_extents) + self.planning_margin)


@dataclass(frozen=True)
class VehicleState:
    pose: Pose
    waypoints: Tuple[Vec3, ...] = ()
    commanded_yaw: Optional[float] = None
    max_speed: float = 0.5
    max_yaw_rate: float = 0.8
    battery: float = 600.0  # remaining flight time, s
    arrival_tolerance: float = 0.02
    hold: Optional[Vec3] = None  # position-hold setpoint used while the queue is empty

    def __post_init__(self):
        if self.max_speed < 0 or self.max_yaw_rate < 0:
            raise ValueError("speed and yaw rate limits must be >= 0")
        if self.battery < 0:
            raise ValueError("battery must be >= 0")

    @staticmethod
    def from_params(pose: Pose, params: VehicleParams, battery: float) -> "VehicleState":
        return VehicleState(pose, (), None, params.max_speed, params.max_yaw_rate, battery,
                            params.arrival_tolerance)

    @property
    def hovering(self) -> bool:
        return not self.waypoints

    def command(self, waypoints=(), yaw: Optional[float] = None,
                hold: Optional[Vec3] = None) -> "VehicleState":
        return replace(self, waypoints=tuple(vec3(w) for w in waypoints), commanded_yaw=yaw,
                       hold=None if hold is None else vec3(hold))


def _pop_reached(position: np.ndarray, queue: Tuple[Vec3, ...], tolerance: float) -> Tuple[Vec3, ...]:
    while queue and np.linalg.norm(np.array(queue[0]) - position) <= tolerance:
        queue = queue[1:]
    return queue


def follow_waypoints(v: VehicleState, dt: float) -> VehicleState:
    """Advance one tick; an empty queue means hover in place"""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    position = v.pose.xyz
    queue = _pop_reached(position, v.waypoints, v.arrival_tolerance)
    if queue:
        offset = np.array(queue[0]) - position
        dist = float(np.linalg.norm(offset))
        travel = min(v.max_speed * dt, dist)
        position = position + offset * (travel / dist)
        queue = _pop_reached(position, queue, v.arrival_tolerance)
    elif v.hold is not None:
        offset = np.array(v.hold) - position
        dist = float(np.linalg.norm(offset))
        if dist > 0:
            position = position + offset * (min(v.max_speed * dt, dist) / dist)

    yaw = v.pose.yaw
    if v.commanded_yaw is not None:
        error = wrap_angle(v.commanded_yaw - yaw)
        limit = v.max_yaw_rate * dt
        yaw = wrap_angle(yaw + max(-limit, min(limit, error)))

    return replace(v, pose=Pose(vec3(position), yaw), waypoints=queue,
                   battery=max(0.0, v.battery - dt))


def heading_to(src: np.ndarray, dst: np.ndarray) -> Optional[float]:
    """Yaw pointing from src to dst in the horizontal plane; None when directly above/below"""
    dx, dy = float(dst[0] - src[0]), float(dst[1] - src[1])
    if math.hypot(dx, dy) < 1e-6:
        return None
    return math.atan2(dy, dx)
