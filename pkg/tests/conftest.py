"""
Pytest configuration and fixtures for membrane-opt tests.
"""

import logging
from collections.abc import Generator

import numpy as np
import pytest

from membraneopt.domain import Domain, build_domain
from membraneopt.fields import ScalarField
from membraneopt.metrics import reset_metrics
from membraneopt.models import DiskSpec, RectangleSpec
from membraneopt.settings import get_settings

# Configure logging for tests
logging.basicConfig(level=logging.DEBUG)


@pytest.fixture(autouse=True)
def clean_globals() -> Generator[None, None, None]:
    """Re-read settings and drop the global metrics collector around every test."""
    get_settings.cache_clear()
    reset_metrics()
    yield
    get_settings.cache_clear()
    reset_metrics()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240501)


@pytest.fixture
def one_cell() -> Domain:
    """Single unit cell: h = 1, L = [4]."""
    return build_domain(RectangleSpec(width=1.0, height=1.0, resolution=1))


@pytest.fixture
def unit_square_3() -> Domain:
    """3 x 3 cells on the unit square."""
    return build_domain(RectangleSpec(width=1.0, height=1.0, resolution=3))


@pytest.fixture
def unit_square_8() -> Domain:
    return build_domain(RectangleSpec(width=1.0, height=1.0, resolution=8))


@pytest.fixture
def unit_square_16() -> Domain:
    return build_domain(RectangleSpec(width=1.0, height=1.0, resolution=16))


@pytest.fixture
def unit_disk_32() -> Domain:
    return build_domain(DiskSpec(radius=1.0, resolution=32))


@pytest.fixture
def tiny_square() -> Domain:
    """
    3 x 3 cells with h = 0.01.

    On domains this small ``L`` dominates ``diag(g)`` by four orders of
    magnitude, so A1 holds with a wide margin and optimizers reach exact
    fixed points.
    """
    return build_domain(RectangleSpec(width=0.03, height=0.03, resolution=3))


@pytest.fixture
def tiny_rectangle() -> Domain:
    """4 x 3 cells with h = 0.01."""
    return build_domain(RectangleSpec(width=0.04, height=0.03, resolution=4))


@pytest.fixture
def tiny_disk() -> Domain:
    """Disk of radius 0.02 on a 4 x 4 grid (12 interior cells)."""
    return build_domain(DiskSpec(radius=0.02, resolution=4))


def random_force(d: Domain, rng: np.random.Generator) -> ScalarField:
    """Force with values uniform in [0.5, 1.5]."""
    return ScalarField(d, rng.uniform(0.5, 1.5, d.n_cells))


@pytest.fixture
def unit_rectangle() -> Domain:
    """4 x 3 cells with h = 1."""
    return build_domain(RectangleSpec(width=4.0, height=3.0, resolution=4))


@pytest.fixture
def unit_disk_4() -> Domain:
    """Disk of radius 1 on a 4 x 4 grid (12 interior cells)."""
    return build_domain(DiskSpec(radius=1.0, resolution=4))
