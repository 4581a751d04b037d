"""
Configuration: process settings from the environment and mission parameters
from JSON config files. Every mission field has a default, so an empty
document `{}` is a valid config; unknown keys are rejected.
"""

import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from autonomy.mission.corridor import CorridorSpec
from autonomy.mission.vehicle import VehicleParams
from autonomy.perception.door_handle_localizer import LocalizationMethod, RansacParams
from autonomy.planning.rrt_star import PlannerParams
from simulation.sensors import DEFAULT_DETECTION_RANGE, CameraIntrinsics, SensorNoise
from simulation.spray_model import CoverageModel, DepositionModel, TankState
from src.models import Box, ConfigError, Vec3, vec3

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    log_dir: str = "logs"
    log_level: str = "INFO"
    env: str = "production"
    workers: int = 1


def load_settings() -> Settings:
    """Read SPRAYSIM_* environment variables (after .env has been loaded)"""
    try:
        workers = int(os.getenv("SPRAYSIM_WORKERS", "1"))
    except ValueError:
        raise ConfigError("SPRAYSIM_WORKERS must be an integer") from None
    return Settings(
        log_dir=os.getenv("SPRAYSIM_LOG_DIR", "logs"),
        log_level=os.getenv("SPRAYSIM_LOG_LEVEL", "INFO").upper(),
        env=os.getenv("SPRAYSIM_ENV", "production"),
        workers=max(1, workers),
    )


@dataclass(frozen=True)
class SprayParams:
    duration: float = 2.0
    standoff: float = 0.30
    threshold: float = 0.05  # position error allowed before the sprayer fires
    approach_gate: float = 1.0
    aim_tolerance: float = math.radians(5.0)
    handle_offset: float = 0.06
    approach_standback: float = 0.5
    memory_radius: float = 0.5

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"spray.{f.name} must be > 0")


@dataclass(frozen=True)
class StartRegion:
    min: Vec3 = (0.5, -0.5, 0.2)
    max: Vec3 = (1.5, 0.5, 0.2)

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.min, self.max)):
            raise ConfigError("start_region min exceeds max")

    def sample(self, rng: np.random.Generator) -> Vec3:
        return vec3(rng.uniform(self.min, self.max))

    @property
    def box(self) -> Box:
        return Box(self.min, self.max)


def _mission_planner() -> PlannerParams:
    return PlannerParams(max_iterations=2000, rewire_radius=0.8, sample_margin=1.5,
                         search_until_max_iter=False)


@dataclass(frozen=True)
class MissionConfig:
    final_goal: Vec3 = (9.0, 0.0, 1.0)
    cruise_altitude: float = 1.0
    ground_altitude: float = 0.2
    goal_tolerance: float = 0.25  # horizontal
    battery_budget: float = 600.0
    landing_reserve: float = 2.0
    seed: int = 0
    dt: float = 0.05
    resolution: float = 0.10
    detection_range: float = DEFAULT_DETECTION_RANGE
    yaw_scan_amplitude: float = math.radians(45.0)
    yaw_scan_rate: float = 0.5
    replan_period: float = 2.0
    max_plan_failures: int = 5
    map_every: int = 5
    map_stride: int = 6
    map_range: float = 3.0
    perceive_every: int = 2
    perception_stride: int = 2
    simplify_attempts: int = 30
    tracker_window: int = 5
    tracker_gate: float = 0.3
    localization: LocalizationMethod = LocalizationMethod.PROJECTED
    spray: SprayParams = field(default_factory=SprayParams)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    noise: SensorNoise = field(default_factory=SensorNoise)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    planner: PlannerParams = field(default_factory=_mission_planner)
    ransac: RansacParams = field(default_factory=RansacParams)
    corridor: CorridorSpec = field(default_factory=CorridorSpec)
    start_region: StartRegion = field(default_factory=StartRegion)
    deposition: DepositionModel = field(default_factory=DepositionModel)
    coverage: CoverageModel = field(default_factory=CoverageModel)
    tank: TankState = field(default_factory=TankState)

    def __post_init__(self):
        positive = ("cruise_altitude", "goal_tolerance", "dt", "resolution", "detection_range",
                    "yaw_scan_rate", "replan_period", "map_range")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("max_plan_failures", "map_every", "map_stride", "perceive_every",
                     "perception_stride", "tracker_window"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.battery_budget < 0 or self.yaw_scan_amplitude < 0 or self.simplify_attempts < 0:
            raise ConfigError("battery_budget, yaw_scan_amplitude and simplify_attempts must be >= 0")
        if self.ground_altitude >= self.cruise_altitude:
            raise ConfigError("ground_altitude must lie below cruise_altitude")


_NESTED = {
    "spray": SprayParams,
    "vehicle": VehicleParams,
    "noise": SensorNoise,
    "camera": CameraIntrinsics,
    "planner": PlannerParams,
    "ransac": RansacParams,
    "corridor": CorridorSpec,
    "start_region": StartRegion,
    "deposition": DepositionModel,
    "coverage": CoverageModel,
    "tank": TankState,
}

_VECTORS = {"final_goal", "half_extents", "nozzle_offset", "camera_offset", "start", "end", "min", "max"}


def _coerce(name: str, value: Any, where: str) -> Any:
    if name in _VECTORS:
        try:
            return vec3(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}.{name}: expected a 3-vector ({e})") from None
    if name in ("anchors", "table"):
        return tuple(tuple(float(x) for x in row) for row in value)
    if name == "localization":
        try:
            return LocalizationMethod(value)
        except ValueError:
            choices = ", ".join(m.value for m in LocalizationMethod)
            raise ConfigError(f"{where}.localization must be one of: {choices}") from None
    return value


def _build(cls, data: Dict[str, Any], where: str, base=None):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is MissionConfig and key in _NESTED:
            default = getattr(base, key) if base is not None else None
            kwargs[key] = _build(_NESTED[key], value, f"{where}.{key}", default)
        else:
            kwargs[key] = _coerce(key, value, where)
    try:
        if base is not None:
            return dataclasses.replace(base, **kwargs)
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def mission_config_from_dict(data: Dict[str, Any]) -> MissionConfig:
    return _build(MissionConfig, data, "config", MissionConfig())


def load_mission_config(path: Union[str, Path]) -> MissionConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    try:
        config = mission_config_from_dict(data)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None
    logger.info(f"[CONFIG] Loaded mission config {path.name} (goal {config.final_goal})")
    return config
