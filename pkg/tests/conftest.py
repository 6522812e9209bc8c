"""
Shared fixtures: tiny hand-built domains for exact checks and the seeded
synthetic basin for end-to-end runs
"""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

from src.core.experiment_manager import Domain, ExperimentConfig, NoiseConfig
from src.core.forcing_noise import WindField
from src.core.param_space import ParameterVector
from src.core.wave_model import BathymetryGrid, Station, StationSet
from src.engines.spea2_engine import EvolutionConfig
from src.utils.logger import set_log_level
from src.utils.synthetic_domain import build_synthetic_domain

set_log_level("WARNING")

START = np.datetime64("2014-08-14T12:00:00", "s")
DEFAULT_THETA = ParameterVector(1.0, 0.015, 0.00302)


def make_times(nt: int) -> np.ndarray:
    return START + np.arange(nt) * np.timedelta64(3, "h")


def constant_wind(speed: float, ny: int = 4, nx: int = 5, nt: int = 10) -> WindField:
    """Uniform eastward wind"""
    u = np.full((nt, ny, nx), float(speed))
    return WindField(make_times(nt), u, np.zeros_like(u))


def storm_wind(ny: int = 6, nx: int = 6, nt: int = 40) -> WindField:
    """Smooth single storm blowing from a fixed direction, strongest in the east"""
    hours = np.arange(nt) * 3.0
    envelope = 6.0 + 10.0 * np.exp(-0.5 * ((hours - 60.0) / 15.0) ** 2)
    gradient = 1.0 + 0.05 * np.arange(nx)
    ripple = 1.0 + 0.02 * np.arange(ny)
    speed = envelope[:, None, None] * ripple[None, :, None] * gradient[None, None, :]
    angle = np.deg2rad(30.0)
    return WindField(make_times(nt), speed * np.cos(angle), speed * np.sin(angle))


@pytest.fixture
def flat_bathy():
    return BathymetryGrid(np.full((4, 5), 20.0))


@pytest.fixture
def three_stations():
    return StationSet((Station("A", 1, 1), Station("B", 3, 2), Station("C", 4, 3)))


@pytest.fixture
def wind15():
    return constant_wind(15.0)


@pytest.fixture
def small_domain():
    """6x6 basin, depths 4-40 m west to east, four stations"""
    depth = np.tile(np.linspace(4.0, 40.0, 6), (6, 1))
    stations = StationSet((Station("S1", 1, 1), Station("S2", 2, 4), Station("S3", 4, 2), Station("S4", 5, 5)))
    return Domain(BathymetryGrid(depth), stations, storm_wind())


@pytest.fixture
def fast_evolution():
    return EvolutionConfig(population_size=8, generations=4, archive_size=4, seed=1)


@pytest.fixture
def small_config(fast_evolution):
    """Cheap experiment settings for the small domain"""
    return ExperimentConfig(
        evolution=fast_evolution,
        noise=NoiseConfig(members=3, sigma=0.25, spacing=3),
        repeats=2,
        scenario_ids=[1, 5, 10],
    )


@pytest.fixture(scope="session")
def synthetic():
    d = build_synthetic_domain(seed=2014, nx=12, ny=12)
    return Domain(d.bathy, d.stations, d.wind)
