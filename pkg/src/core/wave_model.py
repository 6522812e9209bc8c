"""
WAVECAL Wave Model Adapters
Model operator mapping (parameters, wind forcing) to per-station significant
wave height: a closed-form deterministic surrogate and an external-process
adapter for file-driven spectral models
"""

import json
import shlex
import subprocess
import threading
from abc import ABC, abstractmethod
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from config import config
from src.core.exceptions import (ConfigError, ExternalModelError, InputFormatError,
                                 ModelTimeoutError, ShapeError)
from src.core.forcing_noise import WindField
from src.core.param_space import ParameterVector
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)


@dataclass(frozen=True)
class BathymetryGrid:
    """Water depth in meters, shape (ny, nx); depth <= d_min marks land"""
    depth: np.ndarray
    d_min: float = config.WET_DEPTH_MIN

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=float)
        object.__setattr__(self, "depth", depth)
        if depth.ndim != 2 or min(depth.shape) < 1:
            raise ShapeError(f"Bathymetry must be a non-empty (ny, nx) matrix, got {depth.shape}")
        if not np.all(np.isfinite(depth)):
            raise ShapeError("Bathymetry contains non-finite depths")

    @property
    def ny(self) -> int:
        return self.depth.shape[0]

    @property
    def nx(self) -> int:
        return self.depth.shape[1]

    def is_wet(self, ix: int, iy: int) -> bool:
        return bool(self.depth[iy, ix] > self.d_min)


@dataclass(frozen=True)
class Station:
    id: str
    ix: int
    iy: int


@dataclass(frozen=True)
class StationSet:
    """Ordered observation points"""
    stations: Tuple[Station, ...]

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        if len(self.stations) < 1:
            raise ConfigError("Station set must contain at least one station")
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"Station ids must be unique: {ids}")

    def __len__(self):
        return len(self.stations)

    def __iter__(self):
        return iter(self.stations)

    @property
    def ids(self) -> List[str]:
        return [s.id for s in self.stations]

    def get(self, station_id: str) -> Station:
        for s in self.stations:
            if s.id == station_id:
                return s
        raise ConfigError(f"Unknown station: {station_id}")

    def validate(self, bathy: BathymetryGrid):
        """Every station inside the grid and on a wet cell"""
        for s in self.stations:
            if not (0 <= s.ix < bathy.nx and 0 <= s.iy < bathy.ny):
                raise ConfigError(f"Station {s.id} ({s.ix}, {s.iy}) outside {bathy.nx}x{bathy.ny} grid")
            if not bathy.is_wet(s.ix, s.iy):
                raise ConfigError(
                    f"Station {s.id} ({s.ix}, {s.iy}) is on land (depth {bathy.depth[s.iy, s.ix]} m)"
                )


@dataclass(frozen=True)
class StationSeries:
    """Significant wave height series at one station"""
    station_id: str
    times: np.ndarray
    hs: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype="datetime64[s]")
        hs = np.asarray(self.hs, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "hs", hs)
        if times.ndim != 1 or times.shape != hs.shape:
            raise ShapeError(f"Station {self.station_id}: {times.shape} times vs {hs.shape} values")
        if np.any(np.diff(times.astype(np.int64)) <= 0):
            raise ShapeError(f"Station {self.station_id}: timestamps must be strictly increasing")
        if not np.all(np.isfinite(hs)) or np.any(hs < 0):
            raise InputFormatError(f"Station {self.station_id}: Hs must be finite and >= 0")


class ModelAdapter(ABC):
    """Deterministic model operator: identical inputs give identical outputs"""

    stations: StationSet

    @abstractmethod
    def evaluate(self, theta: ParameterVector, wind: WindField) -> List[StationSeries]:
        """One StationSeries per station, in station order"""


# ============================================================================
# Surrogate
# ============================================================================

def _check_wind_matches(wind: WindField, bathy: BathymetryGrid):
    if (wind.ny, wind.nx) != bathy.depth.shape:
        raise ShapeError(f"Wind grid {wind.ny}x{wind.nx} does not match bathymetry {bathy.ny}x{bathy.nx}")


def surrogate_evaluate(theta: ParameterVector, wind: WindField, bathy: BathymetryGrid,
                       stations: StationSet) -> List[StationSeries]:
    """
    Closed-form Hs per station and step

    W_eff follows the wind with memory lambda; H0 = 0.21 drg W_eff^2 / g is
    capped at half the depth, scaled by (stpm / 0.00302)^0.25 and damped by
    exp(-40 cfw / max(depth, 2)).
    """
    _check_wind_matches(wind, bathy)
    stations.validate(bathy)

    ix = np.array([s.ix for s in stations], dtype=int)
    iy = np.array([s.iy for s in stations], dtype=int)
    depth = bathy.depth[iy, ix]

    speed = np.hypot(wind.u[:, iy, ix], wind.v[:, iy, ix])       # (nt, nst)
    lam = config.WIND_MEMORY_LAMBDA
    w_eff, _ = lfilter([lam], [1.0, -(1.0 - lam)], speed, axis=0,
                       zi=((1.0 - lam) * speed[0])[np.newaxis, :])

    h0 = config.FETCH_COEFFICIENT * theta.drg * w_eff ** 2 / config.GRAVITY
    h1 = np.minimum(h0, config.DEPTH_CAP_RATIO * depth)
    h2 = h1 * (theta.stpm / config.STEEPNESS_REFERENCE) ** config.STEEPNESS_EXPONENT
    hs = h2 * np.exp(-config.FRICTION_SCALE * theta.cfw / np.maximum(depth, config.FRICTION_MIN_DEPTH))
    hs = np.maximum(hs, 0.0)

    return [StationSeries(s.id, wind.times, hs[:, k]) for k, s in enumerate(stations)]


class SurrogateWaveModel(ModelAdapter):
    """Pure, reentrant surrogate bound to a domain"""

    def __init__(self, bathy: BathymetryGrid, stations: StationSet):
        stations.validate(bathy)
        self.bathy = bathy
        self.stations = stations

    def evaluate(self, theta: ParameterVector, wind: WindField) -> List[StationSeries]:
        return surrogate_evaluate(theta, wind, self.bathy, self.stations)


# ============================================================================
# External process
# ============================================================================

def _tail(text: str, lines: int = 20) -> str:
    return "\n".join((text or "").splitlines()[-lines:])


def external_evaluate(theta: ParameterVector, wind: WindField, command: str,
                      stations: Optional[StationSet] = None, workdir: Optional[Path] = None,
                      timeout: float = config.EXTERNAL_TIMEOUT_S) -> List[StationSeries]:
    """
    Run an external model through files

    Writes wind.wfld and params.json into workdir, fills the command
    template placeholders {drg} {cfw} {stpm} {wind_path} {out_path}, runs
    it and parses the station CSV it leaves at out_path.

    Args:
        theta: parameters
        wind: forcing
        command: command template
        stations: expected stations; output is reordered to match, missing ones fail
        workdir: scratch directory owned by this call
        timeout: seconds before the process is killed

    Returns:
        list of StationSeries
    """
    # Imported here: formats depends on this module's types
    from src.utils.formats import read_station_csv, write_wind_field

    missing = [p for p in ("wind_path", "out_path") if "{" + p + "}" not in command]
    if missing:
        raise ConfigError(f"Command template lacks placeholders: {missing}")

    workdir = Path(workdir) if workdir is not None else Path.cwd() / "external_run"
    workdir.mkdir(parents=True, exist_ok=True)
    wind_path = workdir / "wind.wfld"
    out_path = workdir / "stations.csv"
    params_path = workdir / "params.json"

    write_wind_field(wind, wind_path)
    params_path.write_text(json.dumps(theta.as_dict(), indent=2))
    if out_path.exists():
        out_path.unlink()

    cmd = command.format(
        drg=repr(theta.drg), cfw=repr(theta.cfw), stpm=repr(theta.stpm),
        wind_path=shlex.quote(str(wind_path)), out_path=shlex.quote(str(out_path)),
    )
    argv = shlex.split(cmd)
    logger.debug(f"External model: {cmd}")

    try:
        proc = subprocess.run(argv, cwd=workdir, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired as e:
        raise ModelTimeoutError(f"External model timed out after {timeout}s: {cmd}") from e
    except OSError as e:
        raise ExternalModelError(f"External model could not be started: {e}", command=cmd) from e

    if proc.returncode != 0:
        raise ExternalModelError("External model failed", command=cmd, returncode=proc.returncode,
                                 stdout=_tail(proc.stdout), stderr=_tail(proc.stderr))
    if not out_path.exists():
        raise InputFormatError(f"External model wrote no output file at {out_path}")

    series = read_station_csv(out_path)
    if stations is None:
        return list(series.values())
    absent = [sid for sid in stations.ids if sid not in series]
    if absent:
        raise InputFormatError(f"External model output lacks stations: {absent}")
    return [series[sid] for sid in stations.ids]


class ExternalProcessModel(ModelAdapter):
    """
    Adapter for a file-driven model binary

    Runs are serialized per working directory; concurrent callers must give
    each adapter its own scratch directory. A directory's lock lives only
    while a run in it is pending.
    """

    # resolved workdir -> [lock, pending runs]
    _dir_locks: Dict[str, list] = {}
    _registry_lock = threading.Lock()

    def __init__(self, command: str, stations: StationSet, workdir: Path,
                 timeout: float = config.EXTERNAL_TIMEOUT_S):
        self.command = command
        self.stations = stations
        self.workdir = Path(workdir)
        self.timeout = timeout
        self._key = str(self.workdir.resolve())

    @contextmanager
    def _workdir_lock(self):
        with self._registry_lock:
            entry = self._dir_locks.setdefault(self._key, [threading.Lock(), 0])
            entry[1] += 1
        try:
            with entry[0]:
                yield
        finally:
            with self._registry_lock:
                entry[1] -= 1
                if entry[1] == 0:
                    del self._dir_locks[self._key]

    def evaluate(self, theta: ParameterVector, wind: WindField) -> List[StationSeries]:
        with self._workdir_lock():
            return external_evaluate(theta, wind, self.command, self.stations,
                                     self.workdir, self.timeout)
