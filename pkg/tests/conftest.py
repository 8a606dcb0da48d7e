"""
Shared fixtures.
"""

import pytest

from andreev_bs.model import PotentialProfile, SimulationConfig


@pytest.fixture
def profile():
    """Default junction: delta0=1, mu0=2, L=2, w=0.25, phi=pi/2, h=0.05."""
    return PotentialProfile()


@pytest.fixture
def config():
    """Default numerical settings (4001 grid points)."""
    return SimulationConfig()


@pytest.fixture
def coarse_config():
    """Smallest allowed grid, for structural checks."""
    return SimulationConfig(grid_points=1001)
