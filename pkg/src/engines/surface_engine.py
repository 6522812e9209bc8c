"""
WAVECAL Error Surface Engine
Dense pooled-RMSE scan over two parameters with the third held fixed,
one surface per forcing member
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.core.exceptions import BoundsError, ConfigError, EmptyRequestError
from src.core.forcing_noise import ForcingEnsemble, WindField
from src.core.metrics import pooled_objectives
from src.core.param_space import PARAMETER_NAMES, ParameterBounds, ParameterVector
from src.core.wave_model import ModelAdapter, StationSeries
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)

SURFACE_COLUMNS = ["drg", "cfw", "stpm", "member", "rmse_pooled"]


@dataclass(frozen=True)
class GridSpec:
    """Scan axes; `fixed` supplies the parameter not on either axis"""
    x_name: str
    x_values: Tuple[float, ...]
    y_name: str
    y_values: Tuple[float, ...]
    fixed: ParameterVector

    def __post_init__(self):
        object.__setattr__(self, "x_values", tuple(float(v) for v in self.x_values))
        object.__setattr__(self, "y_values", tuple(float(v) for v in self.y_values))
        for name in (self.x_name, self.y_name):
            if name not in PARAMETER_NAMES:
                raise ConfigError(f"Unknown surface parameter '{name}' (expected one of {PARAMETER_NAMES})")
        if self.x_name == self.y_name:
            raise ConfigError(f"Surface axes must differ, both are '{self.x_name}'")
        if not self.x_values or not self.y_values:
            raise EmptyRequestError("Surface grid needs at least one value per axis")

    @classmethod
    def linspace(cls, x_name: str, y_name: str, nx: int, ny: int, bounds: ParameterBounds,
                 fixed: ParameterVector) -> "GridSpec":
        """Evenly spaced axes spanning the bounds"""
        if nx < 1 or ny < 1:
            raise EmptyRequestError(f"Surface grid must be at least 1x1, got {nx}x{ny}")

        def axis(name: str, n: int) -> Tuple[float, ...]:
            lo, hi = bounds.interval(name)
            return (0.5 * (lo + hi),) if n == 1 else tuple(np.linspace(lo, hi, n))

        return cls(x_name, axis(x_name, nx), y_name, axis(y_name, ny), fixed)

    def validate(self, bounds: ParameterBounds):
        for name, values in ((self.x_name, self.x_values), (self.y_name, self.y_values)):
            lo, hi = bounds.interval(name)
            outside = [v for v in values if not lo <= v <= hi]
            if outside:
                raise BoundsError(f"Surface values for {name} outside [{lo}, {hi}]: {outside}")

    def theta(self, ix: int, iy: int) -> ParameterVector:
        return self.fixed.replace(**{self.x_name: self.x_values[ix], self.y_name: self.y_values[iy]})


@dataclass
class ErrorSurface:
    grid: GridSpec
    members: List[int]          # -1 for a single unperturbed forcing
    values: np.ndarray          # (members, ny, nx) pooled RMSE

    def to_frame(self) -> pd.DataFrame:
        """Rows ordered by member, then y, then x"""
        rows = []
        for m, member in enumerate(self.members):
            for iy in range(len(self.grid.y_values)):
                for ix in range(len(self.grid.x_values)):
                    theta = self.grid.theta(ix, iy)
                    rows.append((theta.drg, theta.cfw, theta.stpm, member, float(self.values[m, iy, ix])))
        return pd.DataFrame(rows, columns=SURFACE_COLUMNS)

    def minimum(self, member: int = 0) -> Tuple[ParameterVector, float]:
        """Best cell of one surface (by position in `members`)"""
        surface = self.values[member]
        iy, ix = np.unravel_index(int(np.argmin(surface)), surface.shape)
        return self.grid.theta(ix, iy), float(surface[iy, ix])


def error_surface(model: ModelAdapter, forcing: Union[WindField, ForcingEnsemble],
                  observations: Mapping[str, StationSeries], points: Sequence[str], grid: GridSpec,
                  bounds: Optional[ParameterBounds] = None, jobs: int = 1) -> ErrorSurface:
    """
    Pooled RMSE on every grid cell, per forcing member

    Args:
        model: wave model adapter
        forcing: a single wind field or a forcing ensemble
        observations: station id -> observed series
        points: stations pooled into the RMSE
        grid: scan axes and fixed parameter
        bounds: grid values must lie within these (defaults from config)
        jobs: concurrent cell evaluations

    Returns:
        ErrorSurface with deterministic cell ordering
    """
    grid.validate(bounds or ParameterBounds.default())
    if isinstance(forcing, ForcingEnsemble):
        winds = list(forcing.members)
        members = list(range(len(winds)))
    else:
        winds = [forcing]
        members = [-1]

    nx, ny = len(grid.x_values), len(grid.y_values)
    cells = [(m, iy, ix) for m in range(len(winds)) for iy in range(ny) for ix in range(nx)]

    def run_cell(cell) -> float:
        m, iy, ix = cell
        return pooled_objectives(model.evaluate(grid.theta(ix, iy), winds[m]), observations, points)[0]

    logger.info(f"Error surface: {grid.x_name} x {grid.y_name} = {nx}x{ny} cells, {len(winds)} forcing(s)")
    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(run_cell, cells))
    else:
        values = [run_cell(c) for c in cells]

    return ErrorSurface(grid, members, np.asarray(values, dtype=float).reshape(len(winds), ny, nx))
