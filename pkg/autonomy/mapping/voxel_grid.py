"""
Tri-state voxel occupancy map built from depth point clouds.

Rays are carved with an exact grid traversal (every voxel the segment passes
through), vectorized across all rays of a cloud. Occupied cells are never
downgraded by later free-space carving.
"""

import logging
import math
from enum import Enum, IntEnum
from pathlib import Path
from typing import Dict, Iterable, Tuple, Union

import numpy as np

from src.models import Box, PointCloud, PreconditionError, vec3

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 0.10


class CellState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


class UnknownPolicy(Enum):
    FREE = "free"
    OCCUPIED = "occupied"


class VoxelGrid:
    """
    Regular lattice of `dimensions` voxels of edge `resolution`, voxel (0, 0, 0)
    spanning [origin, origin + resolution). Single writer; hand copies to readers.
    """

    def __init__(self, resolution: float, origin: Iterable[float], dimensions: Iterable[int]):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.origin = np.array(vec3(origin))
        self.dimensions = tuple(int(d) for d in dimensions)
        if len(self.dimensions) != 3 or min(self.dimensions) <= 0:
            raise ValueError(f"invalid grid dimensions {self.dimensions}")
        self.cells = np.full(self.dimensions, CellState.UNKNOWN, dtype=np.int8)

    @classmethod
    def from_bounds(cls, bounds: Box, resolution: float = DEFAULT_RESOLUTION) -> "VoxelGrid":
        dims = [max(1, math.ceil(s / resolution - 1e-9)) for s in bounds.size]
        return cls(resolution, bounds.min, dims)

    def copy(self) -> "VoxelGrid":
        other = VoxelGrid(self.resolution, self.origin, self.dimensions)
        other.cells = self.cells.copy()
        return other

    @property
    def bounds(self) -> Box:
        return Box(vec3(self.origin), vec3(self.origin + np.array(self.dimensions) * self.resolution))

    def contains(self, point: Iterable[float]) -> bool:
        p = np.asarray(point, dtype=float)
        upper = self.origin + np.array(self.dimensions) * self.resolution
        return bool(np.all(p >= self.origin) and np.all(p < upper))

    # --- indexing ----------------------------------------------------------

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        """Voxel index of each point (unclamped; may fall outside the grid)"""
        return np.floor((np.asarray(points, dtype=float) - self.origin) / self.resolution).astype(np.int64)

    def index_to_world(self, indices: np.ndarray) -> np.ndarray:
        """Voxel center of each index"""
        return self.origin + (np.asarray(indices, dtype=float) + 0.5) * self.resolution

    def in_grid(self, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices)
        return np.all((idx >= 0) & (idx < np.array(self.dimensions)), axis=-1)

    def state_at(self, point: Iterable[float]) -> CellState:
        idx = self.world_to_index(np.asarray(point, dtype=float))
        if not self.in_grid(idx):
            return CellState.UNKNOWN
        return CellState(int(self.cells[tuple(idx)]))

    def _clamp_inside(self, points: np.ndarray) -> np.ndarray:
        upper = self.origin + np.array(self.dimensions) * self.resolution
        margin = 1e-6 * self.resolution
        return np.clip(points, self.origin + margin, upper - margin)

    # --- traversal ---------------------------------------------------------

    def traverse_many(self, starts: np.ndarray, ends: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Exact traversal of many segments at once. Returns (ray ids, voxel indices),
        grouped by ray and ordered from start voxel to end voxel within each ray.
        """
        a = np.atleast_2d(np.asarray(starts, dtype=float))
        b = np.atleast_2d(np.asarray(ends, dtype=float))
        if len(a) == 1 and len(b) > 1:
            a = np.repeat(a, len(b), axis=0)
        n_rays = len(b)
        if n_rays == 0:
            return np.empty(0, dtype=np.int64), np.empty((0, 3), dtype=np.int64)

        ia = self.world_to_index(a)
        ib = self.world_to_index(b)
        step = np.sign(ib - ia)
        counts = np.abs(ib - ia)

        ev_ray, ev_t, ev_axis, ev_step = [], [], [], []
        for k in range(3):
            n_k = counts[:, k]
            total = int(n_k.sum())
            if total == 0:
                continue
            rays = np.repeat(np.arange(n_rays), n_k)
            first = np.cumsum(n_k) - n_k
            j = np.arange(total) - np.repeat(first, n_k) + 1
            s = step[rays, k]
            plane = np.where(s > 0, ia[rays, k] + j, ia[rays, k] - j + 1)
            coord = self.origin[k] + plane * self.resolution
            ev_t.append((coord - a[rays, k]) / (b[rays, k] - a[rays, k]))
            ev_ray.append(rays)
            ev_axis.append(np.full(total, k))
            ev_step.append(s)

        if not ev_ray:
            return np.arange(n_rays), ia

        ev_ray = np.concatenate(ev_ray)
        ev_t = np.concatenate(ev_t)
        ev_axis = np.concatenate(ev_axis)
        ev_step = np.concatenate(ev_step)
        order = np.lexsort((ev_axis, ev_t, ev_ray))
        ev_ray, ev_axis, ev_step = ev_ray[order], ev_axis[order], ev_step[order]

        delta = np.zeros((len(ev_ray), 3), dtype=np.int64)
        delta[np.arange(len(ev_ray)), ev_axis] = ev_step
        running = np.vstack([np.zeros((1, 3), dtype=np.int64), np.cumsum(delta, axis=0)])
        group_start = np.cumsum(counts.sum(axis=1)) - counts.sum(axis=1)
        visited = ia[ev_ray] + running[1:] - running[group_start[ev_ray]]

        # interleave: each ray's start voxel followed by its crossings
        ray_ids = np.concatenate([np.arange(n_rays), ev_ray])
        voxels = np.vstack([ia, visited])
        rank = np.concatenate([np.full(n_rays, -1), np.arange(len(ev_ray))])
        order = np.lexsort((rank, ray_ids))
        return ray_ids[order], voxels[order]

    def traverse_segment(self, a: Iterable[float], b: Iterable[float]) -> np.ndarray:
        """Ordered voxel indices crossed by the segment a -> b"""
        _, voxels = self.traverse_many(np.asarray(a, dtype=float)[None, :], np.asarray(b, dtype=float)[None, :])
        return voxels

    # --- updates -----------------------------------------------------------

    def _mark_free(self, voxels: np.ndarray) -> None:
        voxels = voxels[self.in_grid(voxels)]
        if not len(voxels):
            return
        idx = tuple(voxels.T)
        current = self.cells[idx]
        self.cells[idx] = np.where(current == CellState.OCCUPIED, current, CellState.FREE)

    def integrate_pointcloud(self, cloud: PointCloud, sensor_origin: Iterable[float]) -> "VoxelGrid":
        """
        Mark each return's voxel occupied and carve free space along the ray to it.
        Returns outside the grid are clamped to the boundary and only carve free space.
        """
        origin = np.asarray(sensor_origin, dtype=float)
        if not self.contains(origin):
            raise PreconditionError(f"sensor origin {tuple(origin)} outside the grid")
        points = np.asarray(cloud, dtype=float).reshape(-1, 3)
        if not len(points):
            return self

        inside = self._inside_mask(points)
        ends = np.where(inside[:, None], points, self._clamp_inside(points))
        ray_ids, voxels = self.traverse_many(origin[None, :], ends)

        end_voxels = self.world_to_index(ends)
        is_endpoint = np.all(voxels == end_voxels[ray_ids], axis=1) & inside[ray_ids]
        self._mark_free(voxels[~is_endpoint])

        hits = end_voxels[inside]
        if len(hits):
            self.cells[tuple(hits.T)] = CellState.OCCUPIED
        return self

    def _inside_mask(self, points: np.ndarray) -> np.ndarray:
        upper = self.origin + np.array(self.dimensions) * self.resolution
        return np.all((points >= self.origin) & (points < upper), axis=1)

    def clear_rays(self, sensor_origin: Iterable[float], endpoints: PointCloud) -> "VoxelGrid":
        """Carve free space along rays with no return, endpoint voxel included"""
        origin = np.asarray(sensor_origin, dtype=float)
        if not self.contains(origin):
            raise PreconditionError(f"sensor origin {tuple(origin)} outside the grid")
        ends = np.asarray(endpoints, dtype=float).reshape(-1, 3)
        if len(ends):
            _, voxels = self.traverse_many(origin[None, :], self._clamp_inside(ends))
            self._mark_free(voxels)
        return self

    def fill_box(self, box: Box, state: CellState) -> "VoxelGrid":
        """Set every voxel whose center lies inside `box`"""
        lo = np.clip(np.ceil((np.array(box.min) - self.origin) / self.resolution - 0.5), 0, None).astype(int)
        hi = np.minimum(np.floor((np.array(box.max) - self.origin) / self.resolution - 0.5).astype(int) + 1,
                        self.dimensions)
        if np.all(hi > lo):
            self.cells[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = state
        return self

    # --- queries -----------------------------------------------------------

    def is_cuboid_free(self, center: Iterable[float], half_extents: Iterable[float],
                       treat_unknown_as: UnknownPolicy = UnknownPolicy.OCCUPIED) -> bool:
        """True iff no voxel touching the axis-aligned cuboid is occupied (or unknown, per policy)"""
        c = np.asarray(center, dtype=float)
        h = np.asarray(half_extents, dtype=float)
        if np.any(h <= 0):
            raise PreconditionError("half extents must be positive")
        lo = self.world_to_index(c - h)
        hi = self.world_to_index(c + h)
        dims = np.array(self.dimensions)
        outside = np.any(lo < 0) or np.any(hi >= dims)
        if outside and treat_unknown_as is UnknownPolicy.OCCUPIED:
            return False
        lo = np.clip(lo, 0, dims - 1)
        hi = np.clip(hi, 0, dims - 1)
        block = self.cells[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
        if np.any(block == CellState.OCCUPIED):
            return False
        if treat_unknown_as is UnknownPolicy.OCCUPIED and np.any(block == CellState.UNKNOWN):
            return False
        return True

    def counts(self) -> Dict[str, int]:
        return {state.name.lower(): int(np.count_nonzero(self.cells == state)) for state in CellState}

    def dump_debug(self, path: Union[str, Path]) -> int:
        """Write `x y z state` per known voxel (voxel centers); returns the line count"""
        known = np.argwhere(self.cells != CellState.UNKNOWN)
        centers = self.index_to_world(known)
        names = {CellState.FREE: "free", CellState.OCCUPIED: "occupied"}
        with open(path, "w") as f:
            for (x, y, z), idx in zip(centers, known):
                f.write(f"{x:.3f} {y:.3f} {z:.3f} {names[CellState(int(self.cells[tuple(idx)]))]}\n")
        logger.debug(f"[MAP] Wrote {len(known)} voxels to {path}")
        return len(known)
