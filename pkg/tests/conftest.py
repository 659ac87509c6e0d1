import numpy as np
import pytest

from kahlerlab import sphere_grid, torus_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def t2():
    return torus_grid(1, 32)


@pytest.fixture(scope="session")
def t2_64():
    return torus_grid(1, 64)


@pytest.fixture(scope="session")
def t4():
    return torus_grid(2, 8)


@pytest.fixture(scope="session")
def s2():
    return sphere_grid(256)
