import numpy as np
import pytest

from sublaplab.grids import assemble, build_grid
from sublaplab.groups import euclidean, heisenberg1
from sublaplab.weights import library


@pytest.fixture(scope="session")
def ou():
    """Reference Ornstein-Uhlenbeck setup: R^1, v = x^2/2, 401 nodes on [-8, 8]."""
    instance = euclidean(1)
    weight = library(instance, "gaussian")
    grid = build_grid(instance, weight, 401, 8.0)
    forms = assemble(grid, weight)
    return instance, weight, grid, forms


@pytest.fixture(scope="session")
def ou_coarse():
    """Half-resolution twin of the reference setup, for two-resolution checks."""
    instance = euclidean(1)
    weight = library(instance, "gaussian")
    grid = build_grid(instance, weight, 201, 8.0)
    forms = assemble(grid, weight)
    return instance, weight, grid, forms


@pytest.fixture(scope="session")
def h1():
    return heisenberg1()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240813)
