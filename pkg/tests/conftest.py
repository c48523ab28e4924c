import numpy as np
import pytest

from stablegauge import spectral as sp
from stablegauge.geometry import Ball, Box
from stablegauge.potential import RadialPower

KATO_Q = RadialPower(center=(0.3, 0.0), beta=0.5, scale=0.5)


@pytest.fixture(scope="session")
def ball_grid():
    return sp.assemble(Ball(), sp.grid_spacing(Ball(), 32), 1.0)


@pytest.fixture(scope="session")
def ball_model(ball_grid):
    return sp.eigensolve(ball_grid)


@pytest.fixture(scope="session")
def ball_model_q(ball_grid):
    return sp.eigensolve(ball_grid.with_potential(KATO_Q))


@pytest.fixture(scope="session")
def small_ball_model():
    grid = sp.assemble(Ball(), sp.grid_spacing(Ball(), 16), 1.0)
    return sp.eigensolve(grid)


@pytest.fixture(scope="session")
def box_model():
    grid = sp.assemble(Box(), sp.grid_spacing(Box(), 24), 1.5)
    return sp.eigensolve(grid)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
