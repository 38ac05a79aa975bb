import numpy as np
import pytest

from interemit import (AtomParams, decomposition_grid, sample_grid,
                       schmidt_decompose, separable_fixture_grid)


@pytest.fixture(scope="session")
def dark_params():
    """Reference dark-state point: equal rates, delta=0.05, eta=0.1."""
    return AtomParams.from_dimensionless(0.05, 0.1)


@pytest.fixture(scope="session")
def dark_rotated_grid(dark_params):
    return sample_grid(dark_params)


@pytest.fixture(scope="session")
def dark_decomposition_grid(dark_params):
    return decomposition_grid(dark_params)


@pytest.fixture(scope="session")
def dark_schmidt(dark_decomposition_grid):
    return schmidt_decompose(dark_decomposition_grid)


@pytest.fixture(scope="session")
def separable_grid():
    return separable_fixture_grid()


@pytest.fixture(scope="session")
def small_dark_params():
    """Cheap instance for oracle cross-checks: delta=0.1, eta=0.1."""
    return AtomParams.from_dimensionless(0.1, 0.1)


@pytest.fixture(scope="session")
def small_decomposition_grid(small_dark_params):
    return decomposition_grid(small_dark_params)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
