import numpy as np
import pytest

from magcd.coefficients import background
from magcd.geometry import make_grid


@pytest.fixture(scope="session")
def small_stg():
    return make_grid(n=(10, 10, 10), nt=8)


@pytest.fixture(scope="session")
def small_coeffs(small_stg):
    return background(small_stg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
