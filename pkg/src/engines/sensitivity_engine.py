"""
WAVECAL Sensitivity Engine
One-at-a-time parameter perturbation: relative input change against the
relative change of the surrogate output, per station and pooled
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from config import config
from src.core.exceptions import ConfigError
from src.core.forcing_noise import WindField
from src.core.metrics import rmse
from src.core.param_space import PARAMETER_NAMES, ParameterBounds, ParameterVector, clamp
from src.core.wave_model import BathymetryGrid, StationSet, surrogate_evaluate
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)

POOLED = "pooled"
SENSITIVITY_COLUMNS = ["parameter", "run", "station", "value", "rel_input_change", "rel_rmse"]


def _relative_rmse(pred: np.ndarray, ref: np.ndarray) -> float:
    """RMSE against the reference divided by the reference RMS"""
    scale = float(np.sqrt(np.mean(ref * ref)))
    if scale == 0.0:
        return float("nan")
    return rmse(pred, ref) / scale


@dataclass
class SensitivityResult:
    parameter: str
    base_theta: ParameterVector
    table: pd.DataFrame

    def pooled(self) -> pd.DataFrame:
        return self.table[self.table["station"] == POOLED].reset_index(drop=True)

    def median_change(self, station: str = POOLED) -> float:
        rows = self.table[self.table["station"] == station]
        return float(rows["rel_rmse"].median())


def run_sensitivity(parameter: str, runs: int, relative_sd: float, base_theta: ParameterVector,
                    wind: WindField, bathy: BathymetryGrid, stations: StationSet, seed: int,
                    bounds: Optional[ParameterBounds] = None) -> SensitivityResult:
    """
    Perturb one parameter by N(0, relative_sd * |base|) per run

    The perturbed value is clamped to bounds; the surrogate output is
    compared with the base-theta output.

    Args:
        parameter: drg, cfw or stpm
        runs: number of perturbations (>= 2)
        relative_sd: noise SD as a fraction of the base value
        base_theta: reference parameters
        wind, bathy, stations: domain
        seed: RNG seed
        bounds: clamp range (defaults from config)

    Returns:
        SensitivityResult with one row per (run, station) plus a pooled row per run
    """
    if parameter not in PARAMETER_NAMES:
        raise ConfigError(f"Unknown parameter '{parameter}' (expected one of {PARAMETER_NAMES})")
    if runs < 2:
        raise ConfigError(f"Sensitivity needs at least 2 runs, got {runs}")
    if relative_sd < 0:
        raise ConfigError(f"Relative SD must be >= 0, got {relative_sd}")
    bounds = bounds or ParameterBounds.default()

    base_value = base_theta.get(parameter)
    reference = surrogate_evaluate(base_theta, wind, bathy, stations)
    ref_pooled = np.concatenate([s.hs for s in reference])

    draws = np.random.default_rng(seed).standard_normal(runs) * relative_sd * abs(base_value)
    rows = []
    for run, delta in enumerate(draws):
        theta = clamp(base_theta.replace(**{parameter: base_value + delta}), bounds)
        value = theta.get(parameter)
        rel_input = abs(value - base_value) / abs(base_value) if base_value != 0 else float("nan")
        output = surrogate_evaluate(theta, wind, bathy, stations)
        for series, ref in zip(output, reference):
            rows.append((parameter, run, series.station_id, value, rel_input,
                         _relative_rmse(series.hs, ref.hs)))
        pooled = np.concatenate([s.hs for s in output])
        rows.append((parameter, run, POOLED, value, rel_input, _relative_rmse(pooled, ref_pooled)))

    table = pd.DataFrame(rows, columns=SENSITIVITY_COLUMNS)
    result = SensitivityResult(parameter, base_theta, table)
    logger.info(f"Sensitivity {parameter}: {runs} runs, sd={relative_sd}, "
                f"median pooled change {result.median_change():.4f}")
    return result


def run_all_sensitivities(base_theta: ParameterVector, wind: WindField, bathy: BathymetryGrid,
                          stations: StationSet, seed: int, runs: int = config.SENSITIVITY_RUNS,
                          relative_sd: float = config.SENSITIVITY_RELATIVE_SD,
                          bounds: Optional[ParameterBounds] = None) -> pd.DataFrame:
    """Boxplot-ready table for every parameter, each with its own RNG substream"""
    frames = []
    for k, name in enumerate(PARAMETER_NAMES):
        sub_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        frames.append(run_sensitivity(name, runs, relative_sd, base_theta, wind, bathy,
                                      stations, sub_seed, bounds).table)
    return pd.concat(frames, ignore_index=True)
