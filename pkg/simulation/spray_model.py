"""
Spray physics surrogate: how much of the spray lands at a given nozzle distance,
how much of the handle stays wetted after a spray of a given length, the
disinfection criterion, and tank bookkeeping.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from src.models import ConfigError, PreconditionError, SpraySimError

logger = logging.getLogger(__name__)

US_FL_OZ_ML = 29.5735
FLOW_RATE_ML_PER_MIN = round(2.6 * US_FL_OZ_ML, 1)  # 2.6 oz/min measured at the pump
TANK_CAPACITY_ML = 250.0
REFERENCE_DISTANCE = 0.30

# Field-reported number of handles one tank covers; does not follow from the
# flow-rate arithmetic (~97) and is reported next to it, unreconciled.
CLAIMED_SPRAYS_PER_TANK = 20


class EmptyTankError(SpraySimError):
    """Requested spray needs more liquid than the tank holds"""


@dataclass(frozen=True)
class DepositionModel:
    """Mass fraction landing on the target vs. nozzle distance (piecewise linear)"""
    anchors: Tuple[Tuple[float, float], ...] = ((0.0, 0.90), (0.30, 0.73))
    cutoff: float = 0.60  # fraction reaches 0 here

    def __post_init__(self):
        if not self.anchors:
            raise ConfigError("deposition model needs at least one anchor")
        distances = [d for d, _ in self.anchors]
        fractions = [f for _, f in self.anchors]
        if any(b <= a for a, b in zip(distances, distances[1:])):
            raise ConfigError("deposition anchors must have increasing distances")
        if any(b > a for a, b in zip(fractions, fractions[1:])):
            raise ConfigError("deposition fractions must be non-increasing in distance")
        if any(not 0.0 <= f <= 1.0 for f in fractions):
            raise ConfigError("deposition fractions must lie in [0, 1]")
        if (REFERENCE_DISTANCE, 0.73) not in self.anchors:
            raise ConfigError("deposition model must keep the (0.30 m, 0.73) calibration point")
        if self.cutoff <= distances[-1]:
            raise ConfigError("deposition cutoff must lie beyond the last anchor")


@dataclass(frozen=True)
class CoverageModel:
    """
    Wetted fraction of the handle area per spray duration: rows of
    (duration s, coverage right after spraying, coverage after `window` seconds).
    """
    table: Tuple[Tuple[float, float, float], ...] = (
        (1.0, 0.68, 0.64),
        (2.0, 0.97, 0.94),
        (3.0, 0.98, 0.97),
    )
    required_fraction: float = 0.90
    window: float = 60.0

    def __post_init__(self):
        if not self.table:
            raise ConfigError("coverage table is empty")
        durations = [row[0] for row in self.table]
        if any(b <= a for a, b in zip(durations, durations[1:])):
            raise ConfigError("coverage table durations must be increasing")
        for duration, initial, later in self.table:
            if not (0.0 <= later <= initial <= 1.0):
                raise ConfigError(f"coverage row for {duration} s must satisfy 0 <= later <= initial <= 1")
        if self.window <= 0:
            raise ConfigError("coverage window must be positive")

    def endpoints(self, duration: float) -> Tuple[float, float]:
        durations, initial, later = (np.array(col, dtype=float) for col in zip(*self.table))
        return float(np.interp(duration, durations, initial)), float(np.interp(duration, durations, later))


@dataclass(frozen=True)
class TankState:
    capacity: float = TANK_CAPACITY_ML
    remaining: float = TANK_CAPACITY_ML
    flow_rate: float = FLOW_RATE_ML_PER_MIN  # mL/min

    def __post_init__(self):
        if not 0.0 <= self.remaining <= self.capacity:
            raise ValueError(f"tank remaining {self.remaining} outside [0, {self.capacity}]")

    def volume_for(self, duration: float) -> float:
        return self.flow_rate * duration / 60.0


def deposition_fraction(model: DepositionModel, distance: float) -> float:
    if distance < 0:
        raise PreconditionError("distance must be >= 0")
    xs = [d for d, _ in model.anchors] + [model.cutoff]
    fs = [f for _, f in model.anchors] + [0.0]
    return float(np.interp(distance, xs, fs, left=fs[0], right=0.0))


def coverage_after(model: CoverageModel, duration: float, elapsed: float) -> float:
    """Coverage `elapsed` seconds after a spray of `duration` seconds"""
    if duration <= 0:
        raise PreconditionError("spray duration must be > 0")
    if elapsed < 0:
        raise PreconditionError("elapsed time must be >= 0")
    initial, later = model.endpoints(duration)
    s = elapsed / model.window
    return max(0.0, initial * (1.0 - s) + later * s)


def is_disinfected(model: CoverageModel, duration: float) -> bool:
    # linear decay: the window minimum sits at one of its ends
    return min(coverage_after(model, duration, 0.0),
               coverage_after(model, duration, model.window)) >= model.required_fraction


def minimum_adequate_duration(model: CoverageModel, step: float = 0.01) -> Optional[float]:
    """Shortest duration on a `step` grid within the table range that passes the criterion"""
    lo, hi = model.table[0][0], model.table[-1][0]
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    for i in range(count):
        duration = round(lo + i * step, 6)
        if is_disinfected(model, duration):
            return duration
    return None


def effective_duration(model: DepositionModel, duration: float, distance: float) -> float:
    """Spray time scaled by how much more (or less) liquid lands than at the reference distance"""
    return duration * deposition_fraction(model, distance) / deposition_fraction(model, REFERENCE_DISTANCE)


def consume(tank: TankState, duration: float) -> TankState:
    if duration < 0:
        raise PreconditionError("spray duration must be >= 0")
    volume = tank.volume_for(duration)
    if volume > tank.remaining:
        raise EmptyTankError(f"need {volume:.2f} mL, {tank.remaining:.2f} mL left")
    return replace(tank, remaining=tank.remaining - volume)


def sprays_remaining(tank: TankState, duration: float) -> int:
    volume = tank.volume_for(duration)
    if volume <= 0:
        raise PreconditionError("spray duration must be > 0")
    return int(math.floor(tank.remaining / volume + 1e-9))
