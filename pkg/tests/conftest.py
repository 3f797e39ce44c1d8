import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qsmooth.pre_solver import published_ensemble  # noqa: E402
from qsmooth.qubit import ModelParams  # noqa: E402
from qsmooth.retrofilter import pre_jump_effect_path  # noqa: E402
from qsmooth.trajectories import TimeGrid, sample_ensemble  # noqa: E402

ACCEPTANCE_LINES = []

# Monte Carlo oracle: 10^5 paths over a window of 2 / (gamma + eps) ending at 0-
MC_TRAJECTORIES = 100_000
MC_CHECKPOINTS = (0, 500, 1000, 1500, 1800, 1900, 1950, 1980, 2000)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def pre(params):
    return published_ensemble(params)


@pytest.fixture(scope="session")
def mc_grid(params):
    return TimeGrid(-2.0 / params.total_rate, 0.0, 1.0 / (1000 * params.total_rate))


@pytest.fixture(scope="session")
def mc_effects(params, mc_grid):
    return pre_jump_effect_path(params, mc_grid.n_steps, mc_grid.dt)


@pytest.fixture(scope="session")
def photon_mc(params, mc_grid):
    return sample_ensemble("photon", params, mc_grid, MC_TRAJECTORIES, seed=2024, checkpoints=MC_CHECKPOINTS)


@pytest.fixture(scope="session")
def homodyne_mc(params, mc_grid):
    return sample_ensemble("homodyne", params, mc_grid, MC_TRAJECTORIES, seed=2025, checkpoints=MC_CHECKPOINTS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
