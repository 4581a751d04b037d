import numpy as np
import pytest

from autonomy.mapping.voxel_grid import CellState, UnknownPolicy, VoxelGrid
from src.models import Box, PreconditionError


def _line_grid() -> VoxelGrid:
    # voxel centers sit on multiples of 0.1; the sensor origin is voxel (0, 1, 1)
    return VoxelGrid(0.1, (-0.05, -0.15, -0.15), (20, 3, 3))


def _free_cube() -> VoxelGrid:
    grid = VoxelGrid(0.1, (0.0, 0.0, 0.0), (20, 20, 20))
    grid.cells[:] = CellState.FREE
    return grid


def test_single_return_carves_and_marks():
    grid = _line_grid()
    grid.integrate_pointcloud(np.array([[1.0, 0.0, 0.0]]), (0.0, 0.0, 0.0))
    assert grid.cells[10, 1, 1] == CellState.OCCUPIED
    assert np.all(grid.cells[1:10, 1, 1] == CellState.FREE)
    assert grid.cells[0, 1, 1] == CellState.FREE
    assert grid.counts() == {"unknown": 20 * 9 - 11, "free": 10, "occupied": 1}


def test_empty_cloud_leaves_grid_unchanged():
    grid = _line_grid()
    before = grid.cells.copy()
    grid.integrate_pointcloud(np.empty((0, 3)), (0.0, 0.0, 0.0))
    np.testing.assert_array_equal(grid.cells, before)


def test_occupied_wins_regardless_of_order():
    ends_in = np.array([[0.5, 0.0, 0.0]])
    passes = np.array([[1.0, 0.0, 0.0]])
    origin = (0.0, 0.0, 0.0)

    a = _line_grid().integrate_pointcloud(ends_in, origin).integrate_pointcloud(passes, origin)
    b = _line_grid().integrate_pointcloud(passes, origin).integrate_pointcloud(ends_in, origin)
    c = _line_grid().integrate_pointcloud(np.vstack([passes, ends_in]), origin)
    for grid in (a, b, c):
        assert grid.cells[5, 1, 1] == CellState.OCCUPIED
    np.testing.assert_array_equal(a.cells, b.cells)
    np.testing.assert_array_equal(a.cells, c.cells)


def test_integration_is_idempotent():
    rng = np.random.default_rng(0)
    cloud = rng.uniform((0.5, -0.1, -0.1), (1.8, 0.1, 0.1), size=(50, 3))
    once = _line_grid().integrate_pointcloud(cloud, (0.0, 0.0, 0.0))
    twice = _line_grid().integrate_pointcloud(cloud, (0.0, 0.0, 0.0)).integrate_pointcloud(cloud, (0.0, 0.0, 0.0))
    np.testing.assert_array_equal(once.cells, twice.cells)


def test_returns_outside_grid_only_carve():
    grid = _line_grid()
    grid.integrate_pointcloud(np.array([[5.0, 0.0, 0.0]]), (0.0, 0.0, 0.0))
    assert grid.counts()["occupied"] == 0
    assert np.all(grid.cells[:, 1, 1] == CellState.FREE)


def test_sensor_outside_grid_is_rejected():
    with pytest.raises(PreconditionError):
        _line_grid().integrate_pointcloud(np.array([[1.0, 0.0, 0.0]]), (-3.0, 0.0, 0.0))


def test_clear_rays_includes_endpoint_and_keeps_occupied():
    grid = _line_grid()
    grid.cells[4, 1, 1] = CellState.OCCUPIED
    grid.clear_rays((0.0, 0.0, 0.0), np.array([[0.7, 0.0, 0.0]]))
    assert np.all(grid.cells[[0, 1, 2, 3, 5, 6, 7], 1, 1] == CellState.FREE)
    assert grid.cells[4, 1, 1] == CellState.OCCUPIED
    assert grid.cells[8, 1, 1] == CellState.UNKNOWN


def test_traversal_is_face_connected():
    grid = VoxelGrid(0.1, (0.0, 0.0, 0.0), (30, 30, 30))
    rng = np.random.default_rng(1)
    starts = rng.uniform(0.0, 3.0, size=(40, 3))
    ends = rng.uniform(0.0, 3.0, size=(40, 3))
    for a, b in zip(starts, ends):
        voxels = grid.traverse_segment(a, b)
        ia, ib = grid.world_to_index(a), grid.world_to_index(b)
        np.testing.assert_array_equal(voxels[0], ia)
        np.testing.assert_array_equal(voxels[-1], ib)
        assert len(voxels) == 1 + int(np.abs(ib - ia).sum())
        assert np.all(np.abs(np.diff(voxels, axis=0)).sum(axis=1) == 1)


def _sampled_voxels(grid, a, b):
    """Voxels hit by points every 0.01 voxel along the segment, endpoints included"""
    n = max(1, int(np.ceil(np.linalg.norm(b - a) / (0.01 * grid.resolution))))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return {tuple(v) for v in grid.world_to_index(a + t * (b - a))}


def _chord(grid, voxel, a, b):
    """Length of the segment inside the voxel; negative when it misses"""
    lo = grid.origin + np.asarray(voxel) * grid.resolution
    hi = lo + grid.resolution
    d = b - a
    t0, t1 = 0.0, 1.0
    for k in range(3):
        if d[k] == 0.0:
            if not lo[k] <= a[k] <= hi[k]:
                return -1.0
            continue
        ta, tb = sorted(((lo[k] - a[k]) / d[k], (hi[k] - a[k]) / d[k]))
        t0, t1 = max(t0, ta), min(t1, tb)
    return (t1 - t0) * float(np.linalg.norm(d))


SPECIAL_RAYS = [
    ((0.05, 0.05, 0.05), (2.55, 0.05, 0.05)),  # along x through voxel centers
    ((0.3, 0.1, 1.0), (0.3, 2.7, 1.0)),  # along y in a voxel face
    ((0.0, 0.0, 0.0), (2.0, 2.0, 2.0)),  # through voxel corners
    ((0.05, 0.05, 0.05), (0.25, 0.25, 0.05)),  # across a voxel edge
]


def test_traversal_matches_dense_sampling():
    grid = VoxelGrid(0.1, (0.0, 0.0, 0.0), (30, 30, 30))
    rng = np.random.default_rng(3)
    rays = SPECIAL_RAYS + list(zip(rng.uniform(0.0, 3.0, (40, 3)), rng.uniform(0.0, 3.0, (40, 3))))
    for a, b in rays:
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        traversed = {tuple(v) for v in grid.traverse_segment(a, b)}
        sampled = _sampled_voxels(grid, a, b)
        assert sampled <= traversed
        # anything the samples missed is a sliver thinner than the sampling step
        for voxel in traversed - sampled:
            assert -1e-9 <= _chord(grid, voxel, a, b) <= 0.01 * grid.resolution + 1e-9


def test_batched_traversal_matches_single_rays():
    grid = VoxelGrid(0.1, (0.0, 0.0, 0.0), (30, 30, 30))
    origin = np.array([1.51, 1.52, 1.53])
    ends = np.random.default_rng(2).uniform(0.0, 3.0, size=(25, 3))
    ray_ids, voxels = grid.traverse_many(origin[None, :], ends)
    for k, end in enumerate(ends):
        np.testing.assert_array_equal(voxels[ray_ids == k], grid.traverse_segment(origin, end))


def test_cuboid_in_free_space():
    assert _free_cube().is_cuboid_free((1.0, 1.0, 1.0), (0.25, 0.25, 0.25))


@pytest.mark.parametrize("corner", [(7, 7, 7), (12, 12, 12), (7, 12, 7)])
def test_occupied_voxel_at_cuboid_corner(corner):
    grid = _free_cube()
    grid.cells[corner] = CellState.OCCUPIED
    assert not grid.is_cuboid_free((1.0, 1.0, 1.0), (0.25, 0.25, 0.25))


def test_unknown_policy():
    grid = VoxelGrid(0.1, (0.0, 0.0, 0.0), (20, 20, 20))
    center, half = (1.0, 1.0, 1.0), (0.25, 0.25, 0.25)
    assert not grid.is_cuboid_free(center, half, UnknownPolicy.OCCUPIED)
    assert grid.is_cuboid_free(center, half, UnknownPolicy.FREE)


def test_cuboid_needs_positive_extents():
    with pytest.raises(PreconditionError):
        _free_cube().is_cuboid_free((1.0, 1.0, 1.0), (0.0, 0.1, 0.1))


def test_fill_box_uses_voxel_centers():
    grid = VoxelGrid(0.1, (0.0, 0.0, 0.0), (10, 10, 10))
    grid.fill_box(Box((0.2, 0.2, 0.2), (0.5, 0.5, 0.5)), CellState.OCCUPIED)
    assert grid.counts()["occupied"] == 27
    assert grid.state_at((0.25, 0.35, 0.45)) is CellState.OCCUPIED
    assert grid.state_at((0.15, 0.35, 0.45)) is CellState.UNKNOWN
    assert grid.state_at((5.0, 5.0, 5.0)) is CellState.UNKNOWN


def test_from_bounds_covers_the_box():
    grid = VoxelGrid.from_bounds(Box((-0.5, -1.6, -0.2), (10.5, 1.6, 2.6)), 0.1)
    assert grid.dimensions == (110, 32, 28)
    assert grid.bounds.contains_box(Box((-0.5, -1.6, -0.2), (10.5, 1.6, 2.6)), tol=1e-6)


def test_dump_debug(tmp_path):
    grid = _line_grid()
    grid.integrate_pointcloud(np.array([[0.3, 0.0, 0.0]]), (0.0, 0.0, 0.0))
    path = tmp_path / "grid.txt"
    assert grid.dump_debug(path) == 4
    lines = path.read_text().splitlines()
    assert lines[-1].split() == ["0.300", "0.000", "0.000", "occupied"]
