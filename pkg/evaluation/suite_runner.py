"""
Multi-trial evaluation: runs the mission from randomized starts, scores every
spray against the ground-truth spray pose and writes per-trial artifacts.

Artifacts carry simulated time only, so reruns with the same inputs produce
byte-identical files.
"""

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from autonomy.mission.mission_controller import MissionController, MissionPhase, SprayRecord
from evaluation.report import SuiteReport, report, write_summary
from simulation.scene import SceneModel, ground_truth_spray_pose, load_scene
from simulation.spray_model import effective_duration, is_disinfected
from src.config import MissionConfig, load_mission_config
from src.logger import get_mission_logger, log_error, write_events
from src.models import PreconditionError, Vec3, vec3

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["t", "x", "y", "z", "yaw", "state"]
SPRAY_HEADER = ["t", "err_x", "err_y", "err_z"]
START_CHANNEL = 99


@dataclass(frozen=True)
class SprayResult:
    """One spray scored against the nearest true handle"""
    handle_id: str
    duration: float
    distance: float  # mean nozzle-to-handle distance while spraying
    disinfected: bool
    trace: Tuple[Tuple[float, Vec3], ...]  # (t, true nozzle - ideal nozzle)

    @property
    def errors(self) -> np.ndarray:
        return np.array([e for _, e in self.trace], dtype=float).reshape(-1, 3)

    @property
    def mean_error(self) -> float:
        errors = self.errors
        return float(np.linalg.norm(errors, axis=1).mean()) if len(errors) else 0.0

    @property
    def mean_offset(self) -> np.ndarray:
        errors = self.errors
        return errors.mean(axis=0) if len(errors) else np.zeros(3)

    @property
    def within_std(self) -> float:
        """RMS distance of the nozzle from its own mean position during the spray"""
        errors = self.errors
        if len(errors) < 2:
            return 0.0
        return float(np.sqrt(np.mean(np.sum((errors - errors.mean(axis=0)) ** 2, axis=1))))


@dataclass
class TrialResult:
    index: int
    seed: int
    start: Vec3
    outcome: str
    abort_reason: Optional[str] = None
    sprays: List[SprayResult] = field(default_factory=list)
    sim_duration: float = 0.0
    wall_duration: float = 0.0  # reported on the console only
    tank_remaining: float = 0.0
    collision_ticks: int = 0
    handles_in_scene: Tuple[str, ...] = ()

    @property
    def aborted(self) -> bool:
        return self.outcome != MissionPhase.DONE.value

    @property
    def mean_error(self) -> Optional[float]:
        if not self.sprays:
            return None
        return float(np.mean([s.mean_error for s in self.sprays]))

    @property
    def succeeded(self) -> bool:
        """Landed at the goal with every handle in the scene disinfected"""
        done = {s.handle_id for s in self.sprays if s.disinfected}
        return not self.aborted and set(self.handles_in_scene) <= done


def score_spray(scene: SceneModel, config: MissionConfig, record: SprayRecord) -> Optional[SprayResult]:
    if not record.trace or not scene.handles:
        return None
    nozzles = np.array([p for _, p in record.trace])
    mean_nozzle = nozzles.mean(axis=0)
    targets = {h.id: ground_truth_spray_pose(scene, h.id, config.spray.standoff).xyz for h in scene.handles}
    handle_id = min(targets, key=lambda hid: float(np.linalg.norm(targets[hid] - mean_nozzle)))
    handle_center = np.array(scene.handle(handle_id).center)
    distance = float(np.linalg.norm(nozzles - handle_center, axis=1).mean())
    effective = effective_duration(config.deposition, record.duration, distance)
    disinfected = record.duration > 0 and is_disinfected(config.coverage, min(record.duration, effective))
    trace = tuple((t, vec3(np.array(p) - targets[handle_id])) for t, p in record.trace)
    return SprayResult(handle_id, record.duration, distance, disinfected, trace)


def trial_start(config: MissionConfig, seed: int) -> Vec3:
    return config.start_region.sample(np.random.default_rng([seed, START_CHANNEL]))


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_trajectory(path: Path, controller: MissionController) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for row in controller.trajectory:
            writer.writerow([_fmt(row.t), *(_fmt(c) for c in row.position), _fmt(row.yaw), row.state])


def write_spray_trace(path: Path, sprays: Sequence[SprayResult]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SPRAY_HEADER)
        for spray in sprays:
            for t, err in spray.trace:
                writer.writerow([_fmt(t), *(_fmt(c) for c in err)])


def run_trial(scene: SceneModel, config: MissionConfig, index: int, base_seed: int,
              out_dir: Union[str, Path, None] = None, mission_log: bool = False) -> TrialResult:
    """Run trial `index` (seed base_seed + index); individual failures become an Aborted result"""
    seed = base_seed + index
    start = trial_start(config, seed)
    result = TrialResult(index, seed, start, MissionPhase.ABORTED.value,
                         handles_in_scene=tuple(h.id for h in scene.handles))
    began = time.perf_counter()
    controller = None
    try:
        controller = MissionController(scene, config, start, seed=seed)
        controller.run()
        result.outcome = controller.phase.value
        result.abort_reason = controller.abort_reason
        result.sprays = [s for s in (score_spray(scene, config, r) for r in controller.sprays) if s is not None]
        result.sim_duration = round(controller.t, 6)
        result.tank_remaining = controller.tank.remaining
        result.collision_ticks = sum(1 for row in controller.trajectory if row.collision)
    except Exception as e:
        result.abort_reason = f"error: {type(e).__name__}: {e}"
        logger.error(f"[SUITE] Trial {index} failed: {e}")
        log_error(index, e, {"seed": seed}, severity="high")
    result.wall_duration = time.perf_counter() - began

    if out_dir is not None and controller is not None:
        out = Path(out_dir)
        write_trajectory(out / f"trial_{index}_trajectory.csv", controller)
        write_spray_trace(out / f"trial_{index}_spray.csv", result.sprays)
        write_events(out / f"trial_{index}_events.jsonl", controller.events)
    if mission_log and controller is not None:
        mission_logger = get_mission_logger()
        for event in controller.events:
            mission_logger.log_event(index, event)

    logger.info(f"[SUITE] Trial {index} (seed {seed}): {result.outcome}"
                f"{' (' + result.abort_reason + ')' if result.abort_reason else ''}, "
                f"{len(result.sprays)} spray(s), sim {result.sim_duration:.1f}s, wall {result.wall_duration:.1f}s")
    return result


def run_trials(scene: SceneModel, config: MissionConfig, trials: int, base_seed: int,
               out_dir: Union[str, Path, None] = None, workers: int = 1,
               mission_log: bool = False) -> List[TrialResult]:
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    if workers <= 1 or trials == 1:
        results = [run_trial(scene, config, i, base_seed, out_dir, mission_log) for i in range(trials)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_trial, scene, config, i, base_seed, out_dir, mission_log)
                       for i in range(trials)]
            results = [f.result() for f in futures]
    return sorted(results, key=lambda r: r.index)


def run_suite(scene_path: Union[str, Path], config_path: Union[str, Path, None], trials: int,
              base_seed: int, out_dir: Union[str, Path], workers: int = 1,
              mission_log: bool = False) -> Tuple[SuiteReport, List[TrialResult]]:
    """Load inputs (failing before any trial on bad files), run the trials and write the summary"""
    scene = load_scene(scene_path)
    config = load_mission_config(config_path) if config_path else MissionConfig()
    results = run_trials(scene, config, trials, base_seed, out_dir, workers, mission_log)
    suite = report(results, config)
    write_summary(suite, out_dir)
    return suite, results
