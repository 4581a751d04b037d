"""
Random shortcutting of planner output: repeatedly pick two non-adjacent
waypoints and drop everything between them when the direct edge is free.
"""

import logging
from typing import Iterable, Optional

import numpy as np

from autonomy.mapping.voxel_grid import VoxelGrid
from autonomy.planning.collision import CollisionChecker
from autonomy.planning.rrt_star import Path

logger = logging.getLogger(__name__)


def simplify_path(grid: VoxelGrid, path: Path, half_extents: Iterable[float], seed: int,
                  attempts: int = 100, checker: Optional[CollisionChecker] = None,
                  unknown_free_radius: float = 0.5) -> Path:
    if attempts <= 0 or len(path.waypoints) < 3:
        return path
    if checker is None:
        checker = CollisionChecker(grid, half_extents, start=path.waypoints[0],
                                   unknown_free_radius=unknown_free_radius)
    rng = np.random.default_rng(seed)
    points = [np.array(w) for w in path.waypoints]
    for _ in range(attempts):
        if len(points) < 3:
            break
        i, j = sorted(int(k) for k in rng.choice(len(points), size=2, replace=False))
        if j - i < 2:
            continue
        if checker.edge_free(points[i], points[j]):
            points = points[:i + 1] + points[j:]
    simplified = Path.from_points(points)
    logger.debug(f"[PLANNER] Shortcut {len(path.waypoints)} -> {len(simplified.waypoints)} waypoints")
    return simplified
