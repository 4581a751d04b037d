"""
Suite aggregation and report writers, plus spraying-parameter sweeps through
the deposition and coverage models.
"""

import csv
import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from simulation.spray_model import (
    CLAIMED_SPRAYS_PER_TANK,
    REFERENCE_DISTANCE,
    TankState,
    coverage_after,
    deposition_fraction,
    effective_duration,
    is_disinfected,
    minimum_adequate_duration,
    sprays_remaining,
)
from src.config import MissionConfig
from src.models import PreconditionError

if TYPE_CHECKING:
    from evaluation.suite_runner import TrialResult

logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("duration", "distance")


@dataclass(frozen=True)
class TrialRow:
    index: int
    seed: int
    outcome: str
    abort_reason: Optional[str]
    succeeded: bool
    sprays: int
    handles: List[str]
    mean_error: Optional[float]
    within_std: Optional[float]
    sim_duration: float
    tank_remaining: float
    collision_ticks: int
    trace_file: str


@dataclass
class SuiteReport:
    trial_count: int
    success_count: int
    success_rate: float
    mean_error: Optional[float]
    max_error: Optional[float]
    within_trial_std: Optional[float]
    between_trial_std: Optional[float]
    collision_ticks: int
    spray_duration: float
    minimum_adequate_duration: Optional[float]
    sprays_per_full_tank: int
    claimed_sprays_per_tank: int = CLAIMED_SPRAYS_PER_TANK
    trials: List[TrialRow] = field(default_factory=list)

    @property
    def all_succeeded(self) -> bool:
        return self.success_count == self.trial_count

    def to_dict(self) -> Dict[str, Any]:
        return _rounded(asdict(self))


def _rounded(value: Any) -> Any:
    if isinstance(value, float):
        return round(value, 6)
    if isinstance(value, dict):
        return {k: _rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v) for v in value]
    return value


def between_trial_std(results: Sequence["TrialResult"]) -> Optional[float]:
    """
    RMS spread of each handle's mean spray position across trials, averaged over
    handles sprayed at least twice.
    """
    by_handle: Dict[str, List[np.ndarray]] = defaultdict(list)
    for r in results:
        for s in r.sprays:
            by_handle[s.handle_id].append(s.mean_offset)
    spreads, weights = [], []
    for offsets in by_handle.values():
        if len(offsets) < 2:
            continue
        offsets = np.array(offsets)
        spreads.append(float(np.sqrt(np.mean(np.sum((offsets - offsets.mean(axis=0)) ** 2, axis=1)))))
        weights.append(len(offsets))
    if not spreads:
        return None
    return float(np.average(spreads, weights=weights))


def report(results: Sequence["TrialResult"], config: Optional[MissionConfig] = None) -> SuiteReport:
    if not results:
        raise PreconditionError("report needs at least one trial result")
    config = config or MissionConfig()
    results = sorted(results, key=lambda r: r.index)

    means = [r.mean_error for r in results if r.mean_error is not None]
    sprays = [s for r in results for s in r.sprays]
    rows = []
    for r in results:
        rows.append(TrialRow(
            index=r.index,
            seed=r.seed,
            outcome=r.outcome,
            abort_reason=r.abort_reason,
            succeeded=r.succeeded,
            sprays=len(r.sprays),
            handles=[s.handle_id for s in r.sprays],
            mean_error=r.mean_error,
            within_std=float(np.mean([s.within_std for s in r.sprays])) if r.sprays else None,
            sim_duration=r.sim_duration,
            tank_remaining=r.tank_remaining,
            collision_ticks=r.collision_ticks,
            trace_file=f"trial_{r.index}_spray.csv",
        ))

    success_count = sum(1 for r in results if r.succeeded)
    full_tank = TankState(config.tank.capacity, config.tank.capacity, config.tank.flow_rate)
    suite = SuiteReport(
        trial_count=len(results),
        success_count=success_count,
        success_rate=success_count / len(results),
        mean_error=float(np.mean(means)) if means else None,
        max_error=float(np.max(means)) if means else None,
        within_trial_std=float(np.mean([s.within_std for s in sprays])) if sprays else None,
        between_trial_std=between_trial_std(results),
        collision_ticks=sum(r.collision_ticks for r in results),
        spray_duration=config.spray.duration,
        minimum_adequate_duration=minimum_adequate_duration(config.coverage),
        sprays_per_full_tank=sprays_remaining(full_tank, config.spray.duration),
        trials=rows,
    )
    logger.info(f"[REPORT] {suite.success_count}/{suite.trial_count} trials succeeded, "
                f"mean nozzle error {_cm(suite.mean_error)}")
    return suite


def _cm(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value * 100:.1f} cm"


def format_summary(suite: SuiteReport) -> str:
    lines = [
        "Spray mission evaluation",
        "========================",
        f"trials:               {suite.trial_count}",
        f"successful trials:    {suite.success_count} ({suite.success_rate:.0%})",
        f"mean nozzle error:    {_cm(suite.mean_error)}",
        f"max trial error:      {_cm(suite.max_error)}",
        f"within-trial std:     {_cm(suite.within_trial_std)}",
        f"between-trial std:    {_cm(suite.between_trial_std)}",
        f"collision ticks:      {suite.collision_ticks}",
        "",
        "Tank",
        "----",
        f"spray duration:       {suite.spray_duration:.2f} s "
        f"(minimum adequate {suite.minimum_adequate_duration} s)",
        f"sprays per full tank: {suite.sprays_per_full_tank} by flow-rate arithmetic",
        f"claimed sprays:       about {suite.claimed_sprays_per_tank} "
        f"(unresolved discrepancy with the flow-rate figure)",
        "",
        "Trials",
        "------",
    ]
    for row in suite.trials:
        reason = f" ({row.abort_reason})" if row.abort_reason else ""
        lines.append(
            f"#{row.index:<3} seed {row.seed:<6} {row.outcome}{reason}  sprays {row.sprays}  "
            f"error {_cm(row.mean_error)}  within {_cm(row.within_std)}  "
            f"t {row.sim_duration:.1f} s  tank {row.tank_remaining:.2f} mL"
            f"{'  COLLISION' if row.collision_ticks else ''}"
        )
    return "\n".join(lines) + "\n"


def write_summary(suite: SuiteReport, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "summary.json"
    text_path = out / "summary.txt"
    json_path.write_text(json.dumps(suite.to_dict(), indent=2, sort_keys=True) + "\n")
    text_path.write_text(format_summary(suite))
    return json_path, text_path


# --- parameter sweeps --------------------------------------------------------

def sweep_rows(param: str, values: Sequence[float], config: Optional[MissionConfig] = None) -> List[Dict[str, Any]]:
    """
    Evaluate the spray models over `values` of `param`: spray duration at the
    reference distance, or nozzle distance at the configured duration.
    """
    if param not in SWEEP_PARAMS:
        raise PreconditionError(f"unknown sweep parameter '{param}' (choose from {', '.join(SWEEP_PARAMS)})")
    config = config or MissionConfig()
    rows = []
    for value in values:
        if param == "duration":
            duration, distance = float(value), REFERENCE_DISTANCE
        else:
            duration, distance = config.spray.duration, float(value)
        effective = effective_duration(config.deposition, duration, distance)
        row = {
            "duration": duration,
            "distance": distance,
            "deposition": deposition_fraction(config.deposition, distance),
            "effective_duration": effective,
        }
        # a spray never counts for longer than it lasted
        credited = min(duration, effective)
        if credited > 0:
            row["coverage_0"] = coverage_after(config.coverage, credited, 0.0)
            row["coverage_60"] = coverage_after(config.coverage, credited, config.coverage.window)
            row["disinfected"] = is_disinfected(config.coverage, credited)
        else:
            row["coverage_0"] = row["coverage_60"] = 0.0
            row["disinfected"] = False
        row["volume_ml"] = config.tank.volume_for(duration)
        rows.append(_rounded(row))
    return rows


def format_sweep(rows: Sequence[Dict[str, Any]]) -> str:
    if not rows:
        return ""
    columns = list(rows[0])
    lines = ["  ".join(f"{c:>18}" for c in columns)]
    for row in rows:
        lines.append("  ".join(f"{str(row[c]):>18}" for c in columns))
    return "\n".join(lines) + "\n"


def write_sweep_csv(rows: Sequence[Dict[str, Any]], path: Union[str, Path]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
