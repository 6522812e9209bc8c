"""
Synthetic Reference Domain - Generates a seeded test basin
Graded bathymetry with a land strip, nine stations across depth classes and
a month of 3-hourly wind with two storm events over a calm background
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from config import config
from src.core.exceptions import ConfigError
from src.core.forcing_noise import WindField
from src.core.wave_model import BathymetryGrid, Station, StationSet
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)

# storm waves at the shallow column are depth limited, which ties stpm
# down independently of drg
STATION_DEPTHS = (4.0, 20.0, 45.0)  # target depth per station column
STORM_DAYS = (8.0, 21.0)
STORM_WIDTH_HOURS = 24.0


@dataclass
class SyntheticDomain:
    bathy: BathymetryGrid
    stations: StationSet
    wind: WindField


def synthetic_bathymetry(nx: int = config.DOMAIN_NX, ny: int = config.DOMAIN_NY,
                         min_depth: float = config.DOMAIN_MIN_DEPTH,
                         max_depth: float = config.DOMAIN_MAX_DEPTH) -> BathymetryGrid:
    """Depth graded west to east, gently rippled north-south, land along part of the west edge"""
    if nx < 4 or ny < 4:
        raise ConfigError(f"Synthetic grid must be at least 4x4, got {nx}x{ny}")
    x = np.linspace(0.0, 1.0, nx)
    y = np.arange(ny)
    depth = min_depth + (max_depth - min_depth) * x[np.newaxis, :]
    depth = depth * (1.0 + 0.05 * np.sin(2.0 * np.pi * y / ny))[:, np.newaxis]
    depth = np.clip(depth, min_depth, max_depth)
    depth[ny // 3: 2 * ny // 3, :max(1, nx // 15)] = 0.0
    return BathymetryGrid(depth)


def synthetic_stations(bathy: BathymetryGrid, depths: Sequence[float] = STATION_DEPTHS) -> StationSet:
    """Three rows of stations, one per target depth, named P1..Pn"""
    rows = (bathy.ny // 5, bathy.ny // 2, (4 * bathy.ny) // 5)
    stations = []
    for iy in rows:
        for target in depths:
            profile = np.where(bathy.depth[iy] > bathy.d_min, bathy.depth[iy], np.inf)
            ix = int(np.argmin(np.abs(profile - target)))
            stations.append(Station(f"P{len(stations) + 1}", ix, iy))
    result = StationSet(tuple(stations))
    result.validate(bathy)
    return result


def synthetic_wind(nx: int, ny: int, seed: int, start: str = config.DOMAIN_START,
                   step_hours: int = config.DOMAIN_STEP_HOURS, days: int = config.DOMAIN_DAYS,
                   calm_speed: float = config.CALM_WIND_SPEED,
                   storm_speed: float = config.STORM_PEAK_SPEED) -> WindField:
    """
    Calm diurnal background plus two storms moving across the basin

    Storm intensity follows a Gaussian envelope in time; the wind veers
    through the storm.
    """
    rng = np.random.default_rng(seed)
    nt = int(days * 24 // step_hours)
    hours = np.arange(nt) * float(step_hours)
    times = np.datetime64(start, "s") + (hours * 3600).astype("timedelta64[s]")

    background = calm_speed * (1.0 + 0.25 * np.sin(2.0 * np.pi * hours / 24.0))
    background = np.maximum(background + 0.3 * rng.standard_normal(nt), 0.5)
    direction = rng.uniform(0, 2 * np.pi) + 0.3 * np.sin(2 * np.pi * hours / (24.0 * 7))

    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny))
    ripple = 1.0 + 0.1 * np.sin(2 * np.pi * xs / nx) * np.cos(2 * np.pi * ys / ny)
    speed = background[:, None, None] * ripple[None, :, :]

    for day in STORM_DAYS:
        peak_hour = 24.0 * (day + rng.uniform(-1.0, 1.0))
        amplitude = storm_speed * rng.uniform(0.85, 1.0) - calm_speed
        envelope = np.exp(-0.5 * ((hours - peak_hour) / STORM_WIDTH_HOURS) ** 2)
        # center travels west to east through the storm
        cx = nx * (0.5 + (hours - peak_hour) / (6 * STORM_WIDTH_HOURS))
        cy = ny * rng.uniform(0.3, 0.7)
        dist2 = (xs[None] - cx[:, None, None]) ** 2 + (ys[None] - cy) ** 2
        footprint = 0.7 + 0.3 * np.exp(-dist2 / (2 * (0.6 * nx) ** 2))
        speed = speed + amplitude * envelope[:, None, None] * footprint
        direction = direction + 0.5 * np.pi * envelope * np.tanh((hours - peak_hour) / STORM_WIDTH_HOURS)

    u = speed * np.cos(direction)[:, None, None]
    v = speed * np.sin(direction)[:, None, None]
    return WindField(times, u, v)


def build_synthetic_domain(seed: int = config.MASTER_SEED, nx: int = config.DOMAIN_NX,
                           ny: int = config.DOMAIN_NY) -> SyntheticDomain:
    bathy = synthetic_bathymetry(nx, ny)
    stations = synthetic_stations(bathy)
    wind = synthetic_wind(nx, ny, seed)
    logger.info(f"Synthetic domain: {nx}x{ny} grid, {len(stations)} stations, {wind.nt} steps, seed={seed}")
    return SyntheticDomain(bathy, stations, wind)
