"""
WAVECAL Metrics
Error metrics (RMSE, MAE, peak-restricted variants), pooling over stations,
relative improvement against the default configuration, calibrated
parameter spread and repeated-run statistics
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Sequence, Tuple

import numpy as np

from config import config
from src.core.exceptions import ConfigError, ShapeError, UndefinedBaselineError
from src.core.param_space import PARAMETER_NAMES, ParameterVector
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)

METRIC_NAMES = ("rmse", "mae", "peak_rmse", "peak_mae")


def _residuals(pred: Sequence[float], obs: Sequence[float]) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.ndim != 1 or pred.shape != obs.shape:
        raise ShapeError(f"Prediction/observation length mismatch: {pred.shape} vs {obs.shape}")
    if pred.size == 0:
        raise ShapeError("Metric over an empty series")
    return pred - obs


def rmse(pred: Sequence[float], obs: Sequence[float]) -> float:
    """sqrt(mean((pred - obs)^2)) in meters"""
    r = _residuals(pred, obs)
    return float(np.sqrt(np.mean(r * r)))


def mae(pred: Sequence[float], obs: Sequence[float]) -> float:
    """mean(|pred - obs|) in meters"""
    r = _residuals(pred, obs)
    return float(np.mean(np.abs(r)))


def peak_threshold(obs: Sequence[float], q: float = config.PEAK_QUANTILE) -> float:
    """Nearest-rank empirical quantile at rank floor(q*n) + 1"""
    if not 0.0 < q < 1.0:
        raise ConfigError(f"Peak quantile must lie in (0, 1), got {q}")
    values = np.sort(np.asarray(obs, dtype=float))
    if values.size == 0:
        raise ShapeError("Quantile of an empty series")
    rank = min(int(math.floor(q * values.size)) + 1, values.size)
    return float(values[rank - 1])


def peak_mask(obs: Sequence[float], q: float = config.PEAK_QUANTILE) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    return obs >= peak_threshold(obs, q)


def peak_metric(pred: Sequence[float], obs: Sequence[float], q: float = config.PEAK_QUANTILE,
                metric: Callable = rmse) -> float:
    """Base metric restricted to steps where obs reaches its q-quantile"""
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    _residuals(pred, obs)
    mask = peak_mask(obs, q)
    return metric(pred[mask], obs[mask])


def improvement(err_candidate: float, err_default: float) -> float:
    """Percent improvement over the default; negative when the candidate is worse"""
    if not err_default > 0.0:
        raise UndefinedBaselineError(f"Improvement undefined for default error {err_default}")
    return 100.0 * (err_default - err_candidate) / err_default


def parameter_sd(genotypes: Sequence[ParameterVector]) -> float:
    """
    Mean relative standard deviation (percent) of calibrated parameters

    Per parameter: 100 * sample SD / |mean| across runs; parameters with
    zero mean are excluded with a warning.
    """
    if len(genotypes) < 2:
        raise ConfigError(f"Parameter spread needs at least 2 runs, got {len(genotypes)}")
    values = np.vstack([g.as_array() for g in genotypes])
    terms = []
    for k, name in enumerate(PARAMETER_NAMES):
        mean = float(np.mean(values[:, k]))
        if mean == 0.0:
            logger.warning(f"Parameter {name} has zero mean across runs, excluded from spread")
            continue
        terms.append(100.0 * float(np.std(values[:, k], ddof=1)) / abs(mean))
    if not terms:
        return 0.0
    return float(np.mean(terms))


# ============================================================================
# Station pooling
# ============================================================================

def aligned_pairs(series: Sequence, observations: Mapping, points: Sequence[str]) -> List[Tuple[np.ndarray, np.ndarray]]:
    """(pred, obs) arrays per point, in point order; times must match exactly"""
    by_id = {s.station_id: s for s in series}
    pairs = []
    for point in points:
        if point not in by_id:
            raise ShapeError(f"Model output lacks station {point}")
        if point not in observations:
            raise ShapeError(f"Observations lack station {point}")
        pred, obs = by_id[point], observations[point]
        if not np.array_equal(pred.times, obs.times):
            raise ShapeError(f"Station {point}: model and observation time axes differ")
        pairs.append((pred.hs, obs.hs))
    return pairs


def pooled_objectives(series: Sequence, observations: Mapping, points: Sequence[str]) -> Tuple[float, float]:
    """(RMSE, MAE) of the concatenated residuals over the given points"""
    pairs = aligned_pairs(series, observations, points)
    pred = np.concatenate([p for p, _ in pairs])
    obs = np.concatenate([o for _, o in pairs])
    return rmse(pred, obs), mae(pred, obs)


@dataclass
class MetricReport:
    """Per-point and pooled error metrics in meters"""
    points: List[str]
    per_point: Dict[str, Dict[str, float]]
    pooled: Dict[str, float]

    def improvements_over(self, default: "MetricReport") -> Dict[str, float]:
        """Pooled percent improvements; NaN where the default error is zero"""
        result = {}
        for name in METRIC_NAMES:
            try:
                result[name] = improvement(self.pooled[name], default.pooled[name])
            except UndefinedBaselineError:
                logger.warning(f"Default {name} is zero, improvement left undefined")
                result[name] = float("nan")
        return result


def metric_report(series: Sequence, observations: Mapping, points: Sequence[str],
                  q: float = config.PEAK_QUANTILE) -> MetricReport:
    """All metrics per point and pooled; peak thresholds are per station"""
    pairs = aligned_pairs(series, observations, points)
    per_point = {}
    peak_pred, peak_obs = [], []
    for point, (pred, obs) in zip(points, pairs):
        mask = peak_mask(obs, q)
        peak_pred.append(pred[mask])
        peak_obs.append(obs[mask])
        per_point[point] = {
            "rmse": rmse(pred, obs),
            "mae": mae(pred, obs),
            "peak_rmse": rmse(pred[mask], obs[mask]),
            "peak_mae": mae(pred[mask], obs[mask]),
        }
    all_pred = np.concatenate([p for p, _ in pairs])
    all_obs = np.concatenate([o for _, o in pairs])
    pk_pred = np.concatenate(peak_pred)
    pk_obs = np.concatenate(peak_obs)
    pooled = {
        "rmse": rmse(all_pred, all_obs),
        "mae": mae(all_pred, all_obs),
        "peak_rmse": rmse(pk_pred, pk_obs),
        "peak_mae": mae(pk_pred, pk_obs),
    }
    return MetricReport(list(points), per_point, pooled)


@dataclass
class RunStatistics:
    """Improvement distribution over repeated calibrations"""
    mean: float
    max: float
    sd: float
    param_sd: float
    count: int = 0


def run_statistics(improvements: Sequence[float], genotypes: Sequence[ParameterVector]) -> RunStatistics:
    """
    Mean / max / sample SD of improvements plus parameter spread

    Undefined (NaN) improvements are skipped; a single run has SD 0 and
    no parameter spread (NaN).
    """
    values = np.asarray([v for v in improvements if not math.isnan(v)], dtype=float)
    if values.size == 0:
        stats = (float("nan"), float("nan"), float("nan"))
    else:
        sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        stats = (float(np.mean(values)), float(np.max(values)), sd)
    spread = parameter_sd(genotypes) if len(genotypes) >= 2 else float("nan")
    return RunStatistics(mean=stats[0], max=stats[1], sd=stats[2], param_sd=spread, count=int(values.size))
