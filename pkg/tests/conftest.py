import numpy as np
import pytest

from phi4sqe.renorm import ModelParams, compute_C1, compute_C2, RenormConstants
from phi4sqe.torus import make_grid


@pytest.fixture
def grid():
    """N = 0 simulation grid: K = 2^(N+2), cubic-safe M = 4K+1."""
    return make_grid(4, 17)


@pytest.fixture
def grid_n1():
    return make_grid(8, 33)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def consts0():
    return RenormConstants(N=0, m0=1.0, C1=compute_C1(0, 1.0), C2=compute_C2(0, 1.0))


@pytest.fixture(scope="session")
def consts1():
    return RenormConstants(N=1, m0=1.0, C1=compute_C1(1, 1.0), C2=compute_C2(1, 1.0))


@pytest.fixture
def params0(grid):
    return ModelParams(N=0, m0=1.0, lam=0.1, lam0=1.0, T=0.5, dt=0.05, seed=7, grid=grid)


@pytest.fixture
def params1(grid_n1):
    return ModelParams(N=1, m0=1.0, lam=0.5, lam0=1.0, T=0.5, dt=0.05, seed=11, grid=grid_n1)
