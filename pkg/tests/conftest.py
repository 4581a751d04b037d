import dataclasses
from pathlib import Path

import numpy as np
import pytest

from autonomy.mapping.voxel_grid import CellState, VoxelGrid
from simulation.scene import SceneModel, hallway_scene, load_scene
from simulation.sensors import SensorNoise
from src.config import MissionConfig
from src.models import Box

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(autouse=True)
def _log_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SPRAYSIM_LOG_DIR", str(tmp_path / "logs"))


@pytest.fixture
def default_scene() -> SceneModel:
    return load_scene(ROOT / "config" / "default_scene.json")


@pytest.fixture
def hallway() -> SceneModel:
    return hallway_scene(doors=[(5.0, 1)])


@pytest.fixture
def wall_scene() -> SceneModel:
    """A single wall face at x = 1 in front of the origin"""
    return SceneModel(
        bounds=Box((-2.0, -5.0, -5.0), (3.0, 5.0, 5.0)),
        obstacles=(Box((1.0, -5.0, -5.0), (2.0, 5.0, 5.0)),),
    )


@pytest.fixture
def free_grid() -> VoxelGrid:
    """20 x 20 x 5 m box of known-free space at 0.1 m"""
    grid = VoxelGrid(0.1, (-1.0, -10.0, -1.0), (120, 200, 40))
    grid.cells[:] = CellState.FREE
    return grid


def quiet_config(**overrides) -> MissionConfig:
    """Mission config with every noise source off"""
    config = MissionConfig(noise=SensorNoise.zero())
    config = dataclasses.replace(config, vehicle=dataclasses.replace(config.vehicle, hold_jitter=0.0))
    return dataclasses.replace(config, **overrides)


def assert_vec(actual, expected, atol=1e-9):
    np.testing.assert_allclose(np.asarray(actual, dtype=float), np.asarray(expected, dtype=float), atol=atol)
