import math

import numpy as np
import pytest

from airmocap.core import OccupancyGrid, WorldModel


def make_world(values, origin=(0.0, 0.0, 0.0), voxel_size=1.0, oob_value=0.0,
               threshold=0.5):
    grid = OccupancyGrid(origin=np.asarray(origin, float), voxel_size=voxel_size,
                         values=np.asarray(values, float), oob_value=oob_value)
    return WorldModel.from_grid(grid, occupancy_threshold=threshold)


@pytest.fixture
def slab_world():
    """Occupancy-1 slab covering x in [10, 15] inside a 30 m corridor.

    A 10 m segment from (7.5, y, z) to (17.5, y, z) has exactly its middle
    5 m inside the slab. Voxels are 0.5 m so the slab boundary falls on
    voxel faces.
    """
    voxel = 0.5
    dims = (60, 20, 20)  # 30 x 10 x 10 m
    values = np.zeros(dims)
    values[20:30, :, :] = 1.0  # x in [10, 15)
    return make_world(values, origin=(0.0, -5.0, -5.0), voxel_size=voxel)


@pytest.fixture
def column_world():
    """Single occupied column due north (+y) of the origin, 10 m away."""
    voxel = 1.0
    dims = (40, 40, 20)
    values = np.zeros(dims)
    values[18:22, 28:32, :12] = 1.0  # centered at (0, 10) in world xy
    return make_world(values, origin=(-20.0, -20.0, 0.0), voxel_size=voxel)


def zero_noise_model():
    from airmocap.capture import NoiseModel
    return NoiseModel(pixel_sigma=0.0, miss_base_rate=0.0, miss_tilt_gain=0.0,
                      swap_rate=0.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo one pass/fail line per acceptance criterion at the end of the run."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
