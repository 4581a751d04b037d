"""
RRT* over 3D positions with cuboid collision checking against the voxel map.

The tree lives in preallocated numpy arrays; nearest and near-node queries are
linear scans. Parent choice and rewiring check edges lazily, cheapest first.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np

from autonomy.mapping.voxel_grid import UnknownPolicy, VoxelGrid
from autonomy.planning.collision import CollisionChecker
from src.models import ConfigError, SpraySimError, Vec3, vec3

logger = logging.getLogger(__name__)


class PlanningError(SpraySimError):
    """Base class for planner failures"""


class StartInCollisionError(PlanningError):
    """The start position is not collision-free for the vehicle cuboid"""


class NoPathFoundError(PlanningError):
    """No tree node reached the goal tolerance within the iteration budget"""


@dataclass(frozen=True)
class PlannerParams:
    max_iterations: int = 5000
    step_size: float = 0.3
    goal_bias: float = 0.1
    rewire_radius: float = 1.0
    goal_tolerance: float = 0.15
    seed: int = 0
    # sample inside the start/goal bounding box grown by this margin (whole map when None)
    sample_margin: Optional[float] = None
    unknown_free_radius: float = 0.5
    search_until_max_iter: bool = True

    def __post_init__(self):
        if self.max_iterations <= 0:
            raise ConfigError("planner max_iterations must be > 0")
        if self.step_size <= 0:
            raise ConfigError("planner step_size must be > 0")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ConfigError("planner goal_bias must lie in [0, 1]")
        if self.rewire_radius <= 0 or self.goal_tolerance <= 0:
            raise ConfigError("planner radii must be > 0")


@dataclass(frozen=True)
class Path:
    waypoints: Tuple[Vec3, ...]

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("a path needs at least one waypoint")

    @staticmethod
    def from_points(points: Iterable[Iterable[float]]) -> "Path":
        """Build a path, dropping consecutive duplicates"""
        kept: List[Vec3] = []
        for p in points:
            q = vec3(p)
            if not kept or q != kept[-1]:
                kept.append(q)
        return Path(tuple(kept))

    @property
    def length(self) -> float:
        pts = np.array(self.waypoints)
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()) if len(pts) > 1 else 0.0

    @property
    def start(self) -> np.ndarray:
        return np.array(self.waypoints[0])

    @property
    def end(self) -> np.ndarray:
        return np.array(self.waypoints[-1])


@dataclass
class PlanResult:
    path: Path
    iterations: int
    tree_size: int
    best_cost_history: List[float] = field(default_factory=list)


class RRTStarPlanner:
    """
    One planning query. `best_cost_history[i]` is the cheapest tree path to the
    goal region after iteration i (inf until the goal region is reached).
    """

    def __init__(self, checker: CollisionChecker, params: PlannerParams):
        self.checker = checker
        self.params = params
        self.rng = np.random.default_rng(params.seed)
        n = params.max_iterations + 1
        self.nodes = np.zeros((n, 3))
        self.parent = np.full(n, -1, dtype=np.int64)
        self.cost = np.zeros(n)
        self.children: List[List[int]] = [[] for _ in range(n)]
        self.size = 0
        self.best_cost_history: List[float] = []

    def _sampling_box(self, start: np.ndarray, goal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        bounds = self.checker.grid.bounds
        lo, hi = np.array(bounds.min), np.array(bounds.max)
        if self.params.sample_margin is not None:
            m = self.params.sample_margin
            lo = np.maximum(lo, np.minimum(start, goal) - m)
            hi = np.minimum(hi, np.maximum(start, goal) + m)
        return lo, hi

    def _add(self, point: np.ndarray, parent: int, cost: float) -> int:
        i = self.size
        self.nodes[i] = point
        self.parent[i] = parent
        self.cost[i] = cost
        if parent >= 0:
            self.children[parent].append(i)
        self.size += 1
        return i

    def _reparent(self, node: int, new_parent: int, new_cost: float) -> None:
        old = self.parent[node]
        self.children[old].remove(node)
        self.children[new_parent].append(node)
        self.parent[node] = new_parent
        delta = self.cost[node] - new_cost
        stack = [node]
        while stack:
            i = stack.pop()
            self.cost[i] -= delta
            stack.extend(self.children[i])

    def _steer(self, src: np.ndarray, target: np.ndarray) -> np.ndarray:
        offset = target - src
        dist = float(np.linalg.norm(offset))
        if dist <= self.params.step_size:
            return target.copy()
        return src + offset * (self.params.step_size / dist)

    def _best_goal_node(self, goal: np.ndarray) -> int:
        d = np.linalg.norm(self.nodes[:self.size] - goal, axis=1)
        reached = np.nonzero(d <= self.params.goal_tolerance)[0]
        if not len(reached):
            return -1
        return int(reached[np.argmin(self.cost[reached])])

    def plan(self, start: Iterable[float], goal: Iterable[float]) -> PlanResult:
        start = np.asarray(tuple(start), dtype=float)
        goal = np.asarray(tuple(goal), dtype=float)
        p = self.params
        if not self.checker.point_free(start):
            raise StartInCollisionError(f"start {tuple(np.round(start, 3))} is in collision")

        lo, hi = self._sampling_box(start, goal)
        self._add(start, -1, 0.0)
        best = -1
        best_cost = math.inf
        iteration = 0
        for iteration in range(1, p.max_iterations + 1):
            if self.rng.random() < p.goal_bias:
                sample = goal.copy()
            else:
                sample = self.rng.uniform(lo, hi)

            tree = self.nodes[:self.size]
            nearest = int(np.argmin(np.sum((tree - sample) ** 2, axis=1)))
            new = self._steer(tree[nearest], sample)
            if self.checker.point_free(new):
                self._extend(new, nearest)

            if self.size and np.linalg.norm(self.nodes[self.size - 1] - goal) <= p.goal_tolerance \
                    or best >= 0:
                best = self._best_goal_node(goal)
                best_cost = self.cost[best] if best >= 0 else math.inf
            self.best_cost_history.append(float(best_cost))
            if best >= 0 and not p.search_until_max_iter:
                break

        if best < 0:
            logger.info(f"[PLANNER] No path after {iteration} iterations ({self.size} nodes)")
            raise NoPathFoundError(f"goal {tuple(np.round(goal, 3))} not reached in {iteration} iterations")

        chain = []
        i = best
        while i >= 0:
            chain.append(self.nodes[i].copy())
            i = int(self.parent[i])
        chain.reverse()
        if np.any(chain[-1] != goal) and self.checker.edge_free(chain[-1], goal):
            chain.append(goal)
        path = Path.from_points(chain)
        logger.debug(f"[PLANNER] Path with {len(path.waypoints)} waypoints, length {path.length:.2f} m")
        return PlanResult(path, iteration, self.size, self.best_cost_history)

    def _extend(self, new: np.ndarray, nearest: int) -> None:
        p = self.params
        tree = self.nodes[:self.size]
        dists = np.linalg.norm(tree - new, axis=1)
        near = np.nonzero(dists <= p.rewire_radius)[0]
        if nearest not in near:
            near = np.append(near, nearest)

        # choose parent: cheapest candidate whose edge is free
        candidate_cost = self.cost[near] + dists[near]
        parent = -1
        for k in np.argsort(candidate_cost, kind="stable"):
            if self.checker.edge_free(tree[near[k]], new):
                parent = int(near[k])
                new_cost = float(candidate_cost[k])
                break
        if parent < 0:
            return
        idx = self._add(new, parent, new_cost)

        # rewire neighbours that get cheaper through the new node
        for j in near:
            j = int(j)
            if j == parent:
                continue
            through = new_cost + float(dists[j])
            if through < self.cost[j] and self.checker.edge_free(new, self.nodes[j]):
                self._reparent(j, idx, through)


def plan_path(grid: VoxelGrid, start: Iterable[float], goal: Iterable[float],
              half_extents: Iterable[float], params: PlannerParams = PlannerParams(),
              treat_unknown_as: UnknownPolicy = UnknownPolicy.OCCUPIED,
              checker: Optional[CollisionChecker] = None) -> Path:
    """
    Collision-free path from `start` to within goal tolerance of `goal`.
    Unknown space counts as occupied except within `unknown_free_radius` of the vehicle at the start.
    """
    start = tuple(start)
    if checker is None:
        checker = CollisionChecker(grid, half_extents, start=start,
                                   unknown_free_radius=params.unknown_free_radius,
                                   treat_unknown_as=treat_unknown_as)
    return RRTStarPlanner(checker, params).plan(start, goal).path


def densify(path: Path, spacing: float) -> np.ndarray:
    """Points along the path no further than `spacing` apart, endpoints included"""
    pts: List[np.ndarray] = [path.start]
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        a, b = np.array(a), np.array(b)
        n = max(1, math.ceil(np.linalg.norm(b - a) / spacing))
        pts.extend(a + (b - a) * (k / n) for k in range(1, n + 1))
    return np.array(pts)

