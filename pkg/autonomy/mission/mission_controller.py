"""
Mission state machine: take off, explore towards the final goal while yawing
side to side, detour to spray every handle that is detected, return to the
corridor, and land at the goal (or early on a fail-safe).

The autonomy stack only ever sees the tracking camera's estimate of the pose;
maps, plans and handle estimates all live in that estimated frame. The
simulated vehicle applies the commanded motion to its true pose, so tracking
error shows up as nozzle error exactly as it would on hardware.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from transitions import Machine

from autonomy.mapping.voxel_grid import VoxelGrid
from autonomy.mission.corridor import corridor_candidates, corridor_centerline
from autonomy.mission.vehicle import VehicleState, follow_waypoints, heading_to
from autonomy.perception.door_handle_localizer import (
    HandleEstimate,
    PerceptionError,
    SprayPose,
    compute_spray_pose,
    estimate_handle,
    fit_door_plane,
    horizontal_normal,
    pair_detections,
    segment_regions,
)
from autonomy.perception.handle_tracker import HandleTracker
from autonomy.planning.collision import CollisionChecker
from autonomy.planning.path_simplifier import simplify_path
from autonomy.planning.rrt_star import Path, PlanningError, RRTStarPlanner
from simulation.scene import SceneModel
from simulation.sensors import (
    DepthImage,
    camera_pose,
    depth_to_pointcloud,
    detect,
    draw_tracking_bias,
    pixel_rays,
    pose_estimate,
    render_depth,
)
from simulation.spray_model import EmptyTankError, TankState, consume
from src.config import MissionConfig
from src.logger import MissionEvent
from src.models import Box, PreconditionError, Pose, Vec3, vec3, wrap_angle

logger = logging.getLogger(__name__)

# rng channels; every draw is seeded by (trial seed, channel, tick)
CH_POSE, CH_MAP, CH_DETECT, CH_PERCEPTION, CH_JITTER, CH_PLAN, CH_RANSAC, CH_BIAS = range(8)

RETRY_INTERVAL = 0.5
APPROACH_TIMEOUT = 60.0
AIM_TIMEOUT = 20.0
APPROACH_RETRIES = 3
ARRIVAL_RADIUS = 0.10
LAND_TOLERANCE = 0.03
DOOR_REGION_RAYS = 3000


class MissionPhase(Enum):
    TAKEOFF = "Takeoff"
    EXPLORE = "Explore"
    APPROACH = "Spray(Approach)"
    AIM = "Spray(Aim)"
    SPRAYING = "Spray(Spraying)"
    RETURN_TO_CORRIDOR = "ReturnToCorridor"
    LAND = "Land"
    DONE = "Done"
    ABORTED = "Aborted"


P = MissionPhase
FLYING = [P.TAKEOFF, P.EXPLORE, P.APPROACH, P.AIM, P.SPRAYING, P.RETURN_TO_CORRIDOR]
TERMINAL = (P.DONE, P.ABORTED)

TRANSITIONS = [
    {"trigger": "climb_done", "source": P.TAKEOFF, "dest": P.EXPLORE},
    {"trigger": "handle_found", "source": P.EXPLORE, "dest": P.APPROACH},
    {"trigger": "reach_gate", "source": P.APPROACH, "dest": P.AIM},
    {"trigger": "aimed", "source": P.AIM, "dest": P.SPRAYING},
    {"trigger": "spray_done", "source": P.SPRAYING, "dest": P.RETURN_TO_CORRIDOR},
    {"trigger": "abandon_spray", "source": [P.APPROACH, P.AIM, P.SPRAYING], "dest": P.RETURN_TO_CORRIDOR},
    {"trigger": "rejoined", "source": P.RETURN_TO_CORRIDOR, "dest": P.EXPLORE},
    {"trigger": "begin_landing", "source": FLYING, "dest": P.LAND},
    {"trigger": "touchdown", "source": P.LAND, "dest": P.DONE, "conditions": "goal_reached"},
    {"trigger": "touchdown", "source": P.LAND, "dest": P.ABORTED, "unless": "goal_reached"},
]


@dataclass
class SprayRecord:
    """One sprayer activation; positions in the world frame unless noted"""
    index: int
    t_start: float
    handle_estimate: Vec3  # estimated frame
    nozzle_target: Vec3  # estimated frame
    duration: float = 0.0
    trace: List[Tuple[float, Vec3]] = field(default_factory=list)  # (t, true nozzle position)
    tank_after: float = 0.0


@dataclass(frozen=True)
class TickRecord:
    t: float
    position: Vec3
    yaw: float
    state: str
    collision: bool


@dataclass(frozen=True)
class MissionSnapshot:
    t: float
    phase: MissionPhase
    pose: Pose
    estimated_pose: Pose
    battery: float
    abort_reason: Optional[str]


def scan_offset(t: float, amplitude: float, rate: float) -> float:
    """Triangle wave in [-amplitude, amplitude] with slope +-rate, zero at t = 0"""
    if amplitude <= 0:
        return 0.0
    period = 4.0 * amplitude
    return abs((rate * t + amplitude) % period - 2.0 * amplitude) - amplitude


class MissionController:
    """
    Runs one mission. Call `step()` once per control tick until `finished`;
    `events`, `trajectory` and `sprays` accumulate the run's record.
    """

    def __init__(self, scene: SceneModel, config: MissionConfig, start: Vec3,
                 seed: int = 0, start_yaw: float = 0.0):
        self.scene = scene
        self.config = config
        self.seed = int(seed)
        self.t = 0.0
        self.tick = 0

        self.vehicle = VehicleState.from_params(Pose(vec3(start), start_yaw), config.vehicle,
                                                config.battery_budget)
        self.bias = draw_tracking_bias(config.noise, [self.seed, CH_BIAS])
        self.est = pose_estimate(self.vehicle.pose, config.noise, self._seed(CH_POSE), self.bias)
        self.grid = VoxelGrid.from_bounds(scene.bounds, config.resolution)
        self.map_version = 0
        self._checker: Optional[CollisionChecker] = None
        self._checker_version = -1

        self.tracker = HandleTracker(config.tracker_window, config.tracker_gate)
        self.tank = config.tank
        self.target: Optional[SprayPose] = None
        self.target_handle: Optional[HandleEstimate] = None
        self.sprayed: List[np.ndarray] = []
        self.skipped: List[np.ndarray] = []
        self.sprays: List[SprayRecord] = []
        self.events: List[MissionEvent] = []
        self.trajectory: List[TickRecord] = []

        self.land_reason: Optional[str] = None
        self.abort_reason: Optional[str] = None
        self.plan_failures = 0
        self.plan_count = 0
        self.last_plan_t = -math.inf
        self.path_invalid = False
        self.phase_started = 0.0
        self.base_yaw = start_yaw
        self.goal_point: Optional[np.ndarray] = None
        self.spray_ticks = 0
        self.aim_blocked = False
        self._spray_tick_target = int(round(config.spray.duration / config.dt))

        self.phase: MissionPhase = P.TAKEOFF
        self.machine = Machine(model=self, states=MissionPhase, transitions=TRANSITIONS,
                               initial=P.TAKEOFF, model_attribute="phase", auto_transitions=False,
                               after_state_change="_on_state_change")
        self._handlers: Dict[MissionPhase, Callable[[], None]] = {
            P.TAKEOFF: self._takeoff,
            P.EXPLORE: self._explore,
            P.APPROACH: self._approach,
            P.AIM: self._aim,
            P.SPRAYING: self._spraying,
            P.RETURN_TO_CORRIDOR: self._return,
            P.LAND: self._land,
        }
        self._enter = {
            P.EXPLORE: self._enter_explore,
            P.APPROACH: self._enter_approach,
            P.AIM: self._enter_aim,
            P.SPRAYING: self._enter_spraying,
            P.RETURN_TO_CORRIDOR: self._enter_return,
            P.LAND: self._enter_land,
        }
        self._enter_takeoff()
        self._record()

    # --- bookkeeping -------------------------------------------------------

    def _seed(self, channel: int) -> List[int]:
        return [self.seed, channel, self.tick]

    def _event(self, kind: str, **details) -> None:
        self.events.append(MissionEvent(round(self.t, 6), kind, self.phase.value, details))

    @property
    def finished(self) -> bool:
        return self.phase in TERMINAL

    @property
    def snapshot(self) -> MissionSnapshot:
        return MissionSnapshot(self.t, self.phase, self.vehicle.pose, self.est,
                               self.vehicle.battery, self.abort_reason)

    def goal_reached(self) -> bool:
        """Judged on the true pose: a landing is Done only when the vehicle really is at the goal"""
        if self.land_reason is not None:
            return False
        offset = self.vehicle.pose.xyz[:2] - np.array(self.config.final_goal[:2])
        return float(np.linalg.norm(offset)) <= self.config.goal_tolerance

    @property
    def landing_tolerance(self) -> float:
        """Goal tolerance for the estimated pose, shrunk by a 3-sigma bound on the horizontal tracking bias"""
        cfg = self.config
        margin = 3.0 * math.sqrt(2.0) * cfg.noise.pose_bias_std
        return max(cfg.goal_tolerance - margin, cfg.vehicle.arrival_tolerance)

    def _horizontal_to_goal(self) -> float:
        return float(np.linalg.norm(self.est.xyz[:2] - np.array(self.config.final_goal[:2])))

    def _on_state_change(self) -> None:
        self.phase_started = self.t
        self._event("transition", to=self.phase.value)
        logger.debug(f"[MISSION] t={self.t:.2f} -> {self.phase.value}")
        enter = self._enter.get(self.phase)
        if enter is not None:
            enter()
        elif self.phase in TERMINAL:
            self.abort_reason = (self.land_reason or "missed goal") if self.phase is P.ABORTED else None
            self._event("finished", outcome=self.phase.value, reason=self.abort_reason)

    def _record(self) -> None:
        pose = self.vehicle.pose
        body = Box.around(pose.xyz, 2.0 * np.array(self.config.vehicle.half_extents))
        collision = any(body.overlaps(b) for b in self.scene.solid_boxes())
        if collision:
            logger.warning(f"[MISSION] Vehicle intersects scene geometry at t={self.t:.2f}")
        self.trajectory.append(TickRecord(round(self.t, 6), pose.position, pose.yaw, self.phase.value, collision))

    def _land_now(self, reason: Optional[str]) -> None:
        self.land_reason = reason
        if reason:
            self._event("failsafe", reason=reason)
            logger.info(f"[MISSION] Fail-safe: {reason}")
        self.begin_landing()

    # --- main loop ---------------------------------------------------------

    def step(self) -> List[MissionEvent]:
        """Advance one control tick; returns the events it produced"""
        if self.finished:
            return []
        first_event = len(self.events)
        cfg = self.config
        self.est = pose_estimate(self.vehicle.pose, cfg.noise, self._seed(CH_POSE), self.bias)

        if self.phase is not P.LAND:
            reserve = cfg.landing_reserve + max(0.0, self.est.xyz[2] - cfg.ground_altitude) / max(
                cfg.vehicle.max_speed, 1e-6)
            if self.vehicle.battery <= reserve:
                self._land_now("low battery")

        if self.tick % cfg.map_every == 0:
            self._update_map()
        if self.phase in (P.EXPLORE, P.APPROACH) and self.tick % cfg.perceive_every == 0:
            self._perceive()

        handler = self._handlers.get(self.phase)
        if handler is not None:
            handler()
        if not self.finished:
            self._advance()

        self.tick += 1
        self.t = self.tick * cfg.dt
        if self.phase is P.SPRAYING and self.spray_ticks > 0:
            nozzle = self.vehicle.pose.child(cfg.vehicle.nozzle_offset)
            self.sprays[-1].trace.append((round(self.t, 6), nozzle.position))
        self._record()
        return self.events[first_event:]

    def run(self, max_ticks: Optional[int] = None) -> MissionPhase:
        if max_ticks is None:
            max_ticks = int(math.ceil((self.config.battery_budget + 120.0) / self.config.dt))
        while not self.finished and self.tick < max_ticks:
            self.step()
        if not self.finished:
            self.abort_reason = "tick limit"
            self.phase = P.ABORTED
            self._event("finished", outcome=self.phase.value, reason=self.abort_reason)
        return self.phase

    def _advance(self) -> None:
        """Run the tracker on the estimated pose and apply its motion to the true pose"""
        cfg = self.config
        est_vehicle = replace(self.vehicle, pose=self.est)
        moved = follow_waypoints(est_vehicle, cfg.dt)
        delta = moved.pose.xyz - self.est.xyz
        dyaw = wrap_angle(moved.pose.yaw - self.est.yaw)
        true = self.vehicle.pose
        position = true.xyz + delta
        if self.phase is P.SPRAYING and cfg.vehicle.hold_jitter > 0:
            position = position + np.random.default_rng(self._seed(CH_JITTER)).normal(
                0.0, cfg.vehicle.hold_jitter, 3)
        self.vehicle = replace(moved, pose=Pose(vec3(position), wrap_angle(true.yaw + dyaw)))

    def _command(self, waypoints, yaw: Optional[float]) -> None:
        waypoints = [vec3(w) for w in waypoints]
        hold = waypoints[-1] if waypoints else self.vehicle.hold
        self.vehicle = self.vehicle.command(waypoints, yaw, hold)

    # --- sensing -----------------------------------------------------------

    def _camera_poses(self) -> Tuple[Pose, Pose]:
        offset = self.config.vehicle.camera_offset
        return camera_pose(self.vehicle.pose, offset), camera_pose(self.est, offset)

    def _update_map(self) -> None:
        cfg = self.config
        cam_true, cam_est = self._camera_poses()
        try:
            img = render_depth(self.scene, cam_true, cfg.camera, cfg.noise, self._seed(CH_MAP),
                               stride=cfg.map_stride)
        except PreconditionError:
            return
        depth = img.depth
        lattice = np.zeros(depth.shape, dtype=bool)
        lattice[::cfg.map_stride, ::cfg.map_stride] = True
        near = lattice & np.isfinite(depth) & (depth <= cfg.map_range)
        far = lattice & ~near

        est_img = img.with_pose(cam_est)
        cloud = depth_to_pointcloud(est_img, cfg.map_stride, mask=near)
        ends = cam_est.xyz + pixel_rays(cfg.camera, cam_est)[far] * cfg.map_range
        try:
            self.grid.clear_rays(cam_est.xyz, ends)
            self.grid.integrate_pointcloud(cloud, cam_est.xyz)
        except PreconditionError:
            return
        self.map_version += 1

        if self.vehicle.waypoints and self.phase in (P.EXPLORE, P.APPROACH, P.RETURN_TO_CORRIDOR):
            checker = self._current_checker()
            route = list(self.vehicle.waypoints)
            if checker.point_free(self.est.xyz):
                route = [self.est.xyz] + route
            if not checker.path_free(route):
                self.path_invalid = True

    def _current_checker(self) -> CollisionChecker:
        if self._checker is None or self._checker_version != self.map_version:
            self._checker = self._build_checker()
            self._checker_version = self.map_version
        return self._checker

    def _build_checker(self) -> CollisionChecker:
        return CollisionChecker(self.grid, self.config.vehicle.planning_extents, start=self.est.xyz,
                                unknown_free_radius=self.config.planner.unknown_free_radius)

    def _near_memory(self, position: np.ndarray) -> bool:
        radius = self.config.spray.memory_radius
        return any(np.linalg.norm(position - p) <= radius for p in self.sprayed + self.skipped)

    def _perceive(self) -> None:
        cfg = self.config
        cam_true, cam_est = self._camera_poses()
        detections = detect(self.scene, cam_true, cfg.camera, cfg.noise, self._seed(CH_DETECT),
                            cfg.detection_range)
        pairs = pair_detections(detections)[:2]
        if not pairs:
            return

        candidates = []
        for k, (door, handle) in enumerate(pairs):
            est = self._localize(door, handle, cam_true, cam_est, k)
            if est is not None and not self._near_memory(np.array(est.position)):
                candidates.append(est)
        if not candidates:
            return

        mean = self.tracker.running_mean()
        if mean is not None:
            candidates.sort(key=lambda e: float(np.linalg.norm(np.array(e.position) - mean)))
        accepted = self.tracker.add(candidates[0])

        if self.phase is P.EXPLORE and accepted and self.tracker.stable:
            fused = self.tracker.fused()
            try:
                self.target = compute_spray_pose(fused, cfg.spray.standoff, cfg.vehicle.nozzle_offset)
            except PerceptionError:
                return
            self.target_handle = fused
            self._event("handle_committed", handle=list(np.round(fused.position, 4)),
                        nozzle_target=list(np.round(self.target.nozzle_position, 4)))
            self.handle_found()

    def _localize(self, door, handle, cam_true: Pose, cam_est: Pose, k: int) -> Optional[HandleEstimate]:
        cfg = self.config
        seed = self._seed(CH_PERCEPTION)
        door_stride = max(cfg.perception_stride, int(math.ceil(math.sqrt(door.box.area / DOOR_REGION_RAYS))))
        try:
            handle_img = render_depth(self.scene, cam_true, cfg.camera, cfg.noise, seed, stride=1,
                                      regions=[handle.box])
            door_img = render_depth(self.scene, cam_true, cfg.camera, cfg.noise, seed, stride=door_stride,
                                    regions=[door.box])
        except PreconditionError:
            return None
        merged = np.where(np.isfinite(handle_img.depth), handle_img.depth, door_img.depth)
        img = DepthImage(merged, cfg.camera, cam_est)
        regions = segment_regions(img, [door, handle], pair=(door, handle))
        if regions.handle_empty:
            return None
        try:
            ransac = replace(cfg.ransac, seed=self.seed * 1_000_003 + self.tick * 8 + k)
            plane = fit_door_plane(regions.door, cam_est.xyz, ransac)
            return estimate_handle(regions.handle, plane, cfg.spray.handle_offset, cfg.localization)
        except PerceptionError as e:
            logger.debug(f"[PERCEPTION] t={self.t:.2f} {type(e).__name__}: {e}")
            return None

    # --- planning ----------------------------------------------------------

    def _escape_point(self, checker: CollisionChecker, position: np.ndarray) -> Optional[np.ndarray]:
        """Closest free voxel center within 0.4 m, for starts that sit in inflated space"""
        grid = self.grid
        reach = int(math.ceil(0.4 / grid.resolution))
        center = grid.world_to_index(position)
        lo = np.clip(center - reach, 0, np.array(grid.dimensions) - 1)
        hi = np.clip(center + reach + 1, 0, np.array(grid.dimensions))
        block = checker.free_mask[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        free = np.argwhere(block)
        if not len(free):
            return None
        points = grid.index_to_world(free + lo)
        dists = np.linalg.norm(points - position, axis=1)
        best = int(np.argmin(dists))
        return points[best] if dists[best] <= 0.4 + 1e-9 else None

    def _plan_to(self, goal: np.ndarray) -> Optional[Path]:
        cfg = self.config
        self.plan_count += 1
        self.last_plan_t = self.t
        checker = self._build_checker()
        start = self.est.xyz
        prefix = []
        if not checker.point_free(start):
            escape = self._escape_point(checker, start)
            if escape is None:
                return None
            prefix, start = [self.est.xyz], escape
        params = replace(cfg.planner, seed=self.seed * 1_000_003 + self.plan_count)
        try:
            result = RRTStarPlanner(checker, params).plan(start, goal)
        except PlanningError as e:
            logger.debug(f"[PLANNER] t={self.t:.2f} {type(e).__name__}: {e}")
            return None
        path = simplify_path(self.grid, result.path, cfg.vehicle.planning_extents, params.seed,
                             cfg.simplify_attempts, checker=checker)
        return Path.from_points(prefix + list(path.waypoints))

    def _follow(self, path: Path, yaw: Optional[float] = None) -> None:
        waypoints = [w for w in path.waypoints if np.linalg.norm(np.array(w) - self.est.xyz) > 1e-9]
        self._command(waypoints, yaw)
        self.path_invalid = False
        self.plan_failures = 0

    def _plan_failed(self, context: str) -> None:
        self.plan_failures += 1
        self._event("plan_failure", context=context, failures=self.plan_failures)
        if self.plan_failures >= self.config.max_plan_failures:
            self._land_now("planner failure")

    def _needs_replan(self, period: Optional[float]) -> bool:
        since = self.t - self.last_plan_t
        if self.path_invalid:
            return True
        if not self.vehicle.waypoints:
            return since >= RETRY_INTERVAL
        return period is not None and since >= period

    def _path_yaw(self) -> float:
        if self.vehicle.waypoints:
            yaw = heading_to(self.est.xyz, np.array(self.vehicle.waypoints[0]))
            if yaw is not None and np.linalg.norm(np.array(self.vehicle.waypoints[0])[:2] - self.est.xyz[:2]) > 0.05:
                self.base_yaw = yaw
        return self.base_yaw

    # --- phases ------------------------------------------------------------

    def _enter_takeoff(self) -> None:
        x, y, _ = self.est.position
        self._command([(x, y, self.config.cruise_altitude)], None)

    def _takeoff(self) -> None:
        if abs(self.est.xyz[2] - self.config.cruise_altitude) < 0.05:
            self.climb_done()

    def _enter_explore(self) -> None:
        self.tracker.reset()
        self.target = None
        self.target_handle = None
        self.last_plan_t = -math.inf

    def _explore_goals(self, checker: CollisionChecker) -> List[np.ndarray]:
        cfg = self.config
        goal = np.array(cfg.final_goal)
        if checker.point_free(goal):
            return [goal]
        points = corridor_candidates(cfg.corridor, self.est.xyz, goal, cfg.cruise_altitude)
        return [np.array(p) for p in points if checker.point_free(p)][:3]

    def _explore(self) -> None:
        cfg = self.config
        if self._horizontal_to_goal() <= self.landing_tolerance:
            self._event("goal_reached")
            self._land_now(None)
            return
        if self._needs_replan(cfg.replan_period):
            goals = self._explore_goals(self._build_checker())
            path = None
            for goal in goals:
                path = self._plan_to(goal)
                if path is not None:
                    self.goal_point = goal
                    break
            self.last_plan_t = self.t
            if path is not None:
                self._follow(path)
            else:
                self._plan_failed("explore")
                if self.finished or self.phase is P.LAND:
                    return
        offset = scan_offset(self.t - self.phase_started, cfg.yaw_scan_amplitude, cfg.yaw_scan_rate)
        self.vehicle = replace(self.vehicle, commanded_yaw=wrap_angle(self._path_yaw() + offset))

    def _staging_point(self) -> np.ndarray:
        n_h = horizontal_normal(self.target_handle.plane)
        return self.target.vehicle_pose.xyz + self.config.spray.approach_standback * n_h

    def _give_up_target(self, reason: str) -> None:
        self._event("spray_abandoned", reason=reason)
        if self.target_handle is not None:
            self.skipped.append(np.array(self.target_handle.position))
        self.abandon_spray()

    def _enter_approach(self) -> None:
        self.last_plan_t = -math.inf
        self._command([], self._handle_yaw())

    def _approach_goals(self, checker: CollisionChecker) -> List[np.ndarray]:
        """The staging point, or the farthest free points on the way to it while it is unmapped"""
        staging = self._staging_point()
        if checker.point_free(staging):
            return [staging]
        offset = staging - self.est.xyz
        span = float(np.linalg.norm(offset))
        steps = int(np.floor((span - 0.5) / 0.25 + 1e-9))
        points = [self.est.xyz + offset * ((span - k * 0.25) / span) for k in range(1, steps + 1)]
        return [p for p in points if checker.point_free(p)][:3]

    def _handle_yaw(self) -> Optional[float]:
        return heading_to(self.est.xyz, np.array(self.target_handle.position))

    def _approach(self) -> None:
        cfg = self.config
        spray_position = self.target.vehicle_pose.xyz
        if np.linalg.norm(self.est.xyz - spray_position) <= cfg.spray.approach_gate:
            fused = self.tracker.fused()
            if fused is not None and np.linalg.norm(
                    np.array(fused.position) - np.array(self.target_handle.position)) <= cfg.tracker_gate:
                try:
                    self.target = compute_spray_pose(fused, cfg.spray.standoff, cfg.vehicle.nozzle_offset)
                    self.target_handle = fused
                except PerceptionError:
                    pass
            self.reach_gate()
            return
        if self.t - self.phase_started > APPROACH_TIMEOUT:
            self._give_up_target("approach timeout")
            return
        if self._needs_replan(cfg.replan_period):
            path = None
            for goal in self._approach_goals(self._build_checker()):
                path = self._plan_to(goal)
                if path is not None:
                    break
            self.last_plan_t = self.t
            if path is None:
                self._plan_failed("approach")
                if self.phase is P.APPROACH and self.plan_failures >= APPROACH_RETRIES:
                    self._give_up_target("no path to spray pose")
                return
            self._follow(path)
        yaw = self._handle_yaw()
        self.vehicle = replace(self.vehicle, commanded_yaw=yaw if yaw is not None else self.base_yaw)

    def _enter_aim(self) -> None:
        target = self.target.vehicle_pose
        self._event("aim", vehicle_target=list(np.round(target.xyz, 4)))
        self.aim_blocked = False
        checker = self._build_checker()
        if checker.point_free(self.est.xyz) and checker.edge_free(self.est.xyz, target.xyz):
            self._command([target.position], target.yaw)
            return
        path = self._plan_to(target.xyz)
        if path is None:
            self.aim_blocked = True
            self._command([], target.yaw)
        else:
            self._follow(path, target.yaw)

    def _aim(self) -> None:
        cfg = self.config
        if self.aim_blocked:
            self._plan_failed("aim")
            if self.phase is P.AIM:
                self._give_up_target("no path to spray pose")
            return
        target = self.target.vehicle_pose
        position_error = np.linalg.norm(self.est.xyz - target.xyz)
        heading_error = abs(wrap_angle(self.est.yaw - target.yaw))
        if position_error < cfg.spray.threshold and heading_error < cfg.spray.aim_tolerance:
            try:
                self.tank = consume(self.tank, cfg.spray.duration)
            except EmptyTankError as e:
                self._event("empty_tank", detail=str(e))
                self._give_up_target("empty tank")
                return
            self.aimed()
        elif self.t - self.phase_started > AIM_TIMEOUT:
            self._give_up_target("aim timeout")

    def _enter_spraying(self) -> None:
        target = self.target.vehicle_pose
        self._command([], target.yaw)
        self.vehicle = replace(self.vehicle, hold=target.position)
        self.spray_ticks = 0
        self.sprays.append(SprayRecord(
            index=len(self.sprays),
            t_start=round(self.t, 6),
            handle_estimate=self.target_handle.position,
            nozzle_target=self.target.nozzle_position,
            tank_after=self.tank.remaining,
        ))

    def _spraying(self) -> None:
        if self.spray_ticks >= self._spray_tick_target:
            record = self.sprays[-1]
            record.duration = round(self.spray_ticks * self.config.dt, 6)
            self.sprayed.append(np.array(self.target_handle.position))
            self._event("spray", index=record.index, duration=record.duration,
                        handle=list(np.round(record.handle_estimate, 4)),
                        tank_remaining=round(self.tank.remaining, 4))
            self.spray_done()
            return
        self.spray_ticks += 1

    def _enter_return(self) -> None:
        self.last_plan_t = -math.inf
        self.goal_point = np.array(corridor_centerline(self.config.corridor, self.est.xyz,
                                                       self.config.cruise_altitude))
        self._command([], None)

    def _return(self) -> None:
        if not self.vehicle.waypoints and np.linalg.norm(self.est.xyz - self.goal_point) < ARRIVAL_RADIUS:
            self.rejoined()
            return
        if self._needs_replan(None):
            path = self._plan_to(self.goal_point)
            self.last_plan_t = self.t
            if path is None:
                self._plan_failed("return to corridor")
                return
            self._follow(path)
        self.vehicle = replace(self.vehicle, commanded_yaw=self._path_yaw())

    def _enter_land(self) -> None:
        x, y, _ = self.est.position
        self._command([(x, y, self.config.ground_altitude)], None)

    def _land(self) -> None:
        if not self.vehicle.waypoints and abs(self.est.xyz[2] - self.config.ground_altitude) <= LAND_TOLERANCE:
            self.touchdown()
