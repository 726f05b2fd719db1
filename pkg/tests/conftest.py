import math

import numpy as np
import pytest

from dichotomy import (DichotomyCertificate, EvolutionFamily, NormFamily,
                       uniform_grid)


@pytest.fixture
def scalar_stable():
    return EvolutionFamily.scalar(-1.0)


@pytest.fixture
def scalar_unstable():
    return EvolutionFamily.scalar(1.0)


@pytest.fixture
def saddle():
    return EvolutionFamily.diagonal([-1.0, 1.0])


@pytest.fixture
def rotation():
    return EvolutionFamily.rotation()


@pytest.fixture
def norms1():
    return NormFamily.constant(1)


@pytest.fixture
def norms2():
    return NormFamily.constant(2)


def stable_cert(grid, family, norms):
    return DichotomyCertificate.constant_projection(
        [[1.0]], 1.0, 1.0, 1.0, grid, family, norms)


def unstable_cert(grid, family, norms):
    return DichotomyCertificate.constant_projection(
        [[0.0]], 1.0, 1.0, 1.0, grid, family, norms)


def saddle_cert(grid, family, norms):
    return DichotomyCertificate.constant_projection(
        np.diag([1.0, 0.0]), 1.0, 1.0, 1.0, grid, family, norms)


@pytest.fixture
def wide_grid():
    return uniform_grid(-12.0, 12.0, 0.002)


def analytic_indicator_response(ts):
    """Bounded solution of x' = -x + chi_[0,1] on the line."""
    ts = np.asarray(ts, dtype=float)
    out = np.zeros_like(ts)
    mid = (ts >= 0) & (ts <= 1)
    out[mid] = 1.0 - np.exp(-ts[mid])
    late = ts > 1
    out[late] = (1.0 - math.exp(-1.0)) * np.exp(-(ts[late] - 1.0))
    return out
