"""
Configuration-space collision checks for the vehicle cuboid against the voxel map.

Occupied (and, when unknown counts as occupied, unknown) voxels are dilated by
the cuboid's half extents in voxels, so the vehicle reduces to a point: a
position is free iff its voxel is free in the inflated map, and an edge is free
iff every voxel it passes through is. Unknown voxels within `unknown_free_radius`
of the vehicle cuboid at the start do not block.
"""

import logging
import math
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage

from autonomy.mapping.voxel_grid import CellState, UnknownPolicy, VoxelGrid

logger = logging.getLogger(__name__)


def inflate(mask: np.ndarray, radius: Sequence[int], outside: bool) -> np.ndarray:
    """Box dilation by `radius` voxels per axis, done one axis at a time"""
    out = mask
    for axis, r in enumerate(radius):
        if r <= 0:
            continue
        shape = [1, 1, 1]
        shape[axis] = 2 * r + 1
        out = ndimage.binary_dilation(out, structure=np.ones(shape, dtype=bool), border_value=int(outside))
    return out


class CollisionChecker:
    def __init__(self, grid: VoxelGrid, half_extents: Iterable[float],
                 start: Optional[Iterable[float]] = None, unknown_free_radius: float = 0.5,
                 treat_unknown_as: UnknownPolicy = UnknownPolicy.OCCUPIED):
        self.grid = grid
        self.half_extents = np.asarray(tuple(half_extents), dtype=float)
        if np.any(self.half_extents <= 0):
            raise ValueError("half extents must be positive")
        self.radius = [math.ceil(h / grid.resolution - 1e-9) for h in self.half_extents]

        blocked = inflate(grid.cells == CellState.OCCUPIED, self.radius, outside=False)
        if treat_unknown_as is UnknownPolicy.OCCUPIED:
            unknown = grid.cells == CellState.UNKNOWN
            if start is not None and unknown_free_radius > 0:
                unknown &= ~self.near_cuboid(np.asarray(tuple(start), dtype=float), unknown_free_radius)
            blocked |= inflate(unknown, self.radius, outside=True)
        self.blocked = blocked

    def near_cuboid(self, center: np.ndarray, radius: float) -> np.ndarray:
        """Voxels whose center lies within `radius` of the vehicle cuboid placed at `center`"""
        axes = [self.grid.origin[k] + (np.arange(self.grid.dimensions[k]) + 0.5) * self.grid.resolution
                for k in range(3)]
        gaps = [np.maximum(np.abs(axes[k] - center[k]) - self.half_extents[k], 0.0) for k in range(3)]
        dx, dy, dz = np.meshgrid(*gaps, indexing="ij")
        return dx ** 2 + dy ** 2 + dz ** 2 <= radius ** 2

    @property
    def free_mask(self) -> np.ndarray:
        return ~self.blocked

    def point_free(self, point: Iterable[float]) -> bool:
        idx = self.grid.world_to_index(np.asarray(tuple(point), dtype=float))
        return bool(self.grid.in_grid(idx)) and not self.blocked[tuple(idx)]

    def edge_free(self, a: Iterable[float], b: Iterable[float]) -> bool:
        voxels = self.grid.traverse_segment(tuple(a), tuple(b))
        if not np.all(self.grid.in_grid(voxels)):
            return False
        return not np.any(self.blocked[tuple(voxels.T)])

    def path_free(self, waypoints) -> bool:
        points = [np.asarray(tuple(w), dtype=float) for w in waypoints]
        if len(points) == 1:
            return self.point_free(points[0])
        return all(self.edge_free(a, b) for a, b in zip(points, points[1:]))
