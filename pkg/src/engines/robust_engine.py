"""
WAVECAL Robust Fitness Engine
Ensemble-based objectives: every genotype is run on each perturbed forcing
member, the members with the smallest mean error are kept and their
objective vectors are averaged into one robust objective vector
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from threading import Lock
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from config import config
from src.core.exceptions import ConfigError, EvaluationError
from src.core.forcing_noise import ForcingEnsemble, WindField, suppress_calm
from src.core.metrics import pooled_objectives
from src.core.param_space import ParameterBounds, ParameterVector
from src.core.wave_model import ModelAdapter, StationSeries
from src.engines.spea2_engine import (EvolutionConfig, EvolutionResult, ObjectiveVector,
                                      SPEA2Engine)
from src.utils.logger import CalibrationLogger

logger = CalibrationLogger.get_logger(__name__)


class Aggregator(Enum):
    """How retained member objectives are combined"""
    MEAN = "mean"
    MEAN_VARIANCE = "mean_variance"


@dataclass
class RobustConfig:
    """Ensemble objective settings; ens_amount None means ceil(n / 2)"""
    ens_amount: Optional[int] = config.ENS_AMOUNT
    aggregator: Aggregator = Aggregator(config.AGGREGATOR)
    variance_weight: float = config.VARIANCE_WEIGHT
    apply_calm_suppression: bool = config.APPLY_CALM_SUPPRESSION
    calm_threshold: float = config.CALM_THRESHOLD
    calm_overshoot: float = config.CALM_OVERSHOOT

    def __post_init__(self):
        if not isinstance(self.aggregator, Aggregator):
            try:
                self.aggregator = Aggregator(self.aggregator)
            except ValueError as e:
                raise ConfigError(f"Unknown aggregator '{self.aggregator}' "
                                  f"(expected one of {[a.value for a in Aggregator]})") from e
        if self.ens_amount is not None and int(self.ens_amount) < 1:
            raise ConfigError(f"ens_amount must be >= 1, got {self.ens_amount}")
        if self.variance_weight < 0:
            raise ConfigError(f"variance_weight must be >= 0, got {self.variance_weight}")

    def resolved_amount(self, members: int) -> int:
        amount = math.ceil(members / 2) if self.ens_amount is None else int(self.ens_amount)
        if not 1 <= amount <= members:
            raise ConfigError(f"ens_amount {amount} outside [1, {members}] for this ensemble")
        return amount

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], **overrides) -> "RobustConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown robust keys: {sorted(unknown)}")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)


@dataclass
class EnsembleEvaluation:
    genotype: ParameterVector
    per_member: List[ObjectiveVector]
    aggregated: ObjectiveVector
    selected: List[int] = field(default_factory=list)


@dataclass
class AuditRow:
    generation: int
    individual: int
    member: int
    obj_rmse: float
    obj_mae: float
    selected: bool


# ============================================================================
# Aggregation
# ============================================================================

def best_member_indices(objs: Sequence[ObjectiveVector], ens_amount: int) -> List[int]:
    """Indices of the ens_amount smallest coordinate means, ascending"""
    if not 1 <= ens_amount <= len(objs):
        raise ConfigError(f"ens_amount {ens_amount} outside [1, {len(objs)}]")
    means = [float(np.mean(o)) for o in objs]
    ranked = sorted(range(len(objs)), key=lambda k: (means[k], k))
    return sorted(ranked[:ens_amount])


def take_best_by_mean(objs: Sequence[ObjectiveVector], ens_amount: int) -> List[ObjectiveVector]:
    """The ens_amount vectors with smallest mean, in their original order"""
    return [objs[k] for k in best_member_indices(objs, ens_amount)]


def aggregate(selected: Sequence[ObjectiveVector], robust_config: RobustConfig) -> ObjectiveVector:
    """
    Coordinate-wise mean, or mean + w * SD for the mean-variance aggregator

    The mean is taken on offsets from the coordinate minimum, so equal
    vectors aggregate to exactly themselves. SD is the population SD
    (ddof=0) of the selected members, 0 for a single member. Run
    statistics over repeats use the sample SD.
    """
    if len(selected) == 0:
        raise ConfigError("Cannot aggregate an empty selection")
    arr = np.asarray(selected, dtype=float)
    low = arr.min(axis=0)
    offsets = arr - low
    result = low + offsets.mean(axis=0)
    if robust_config.aggregator is Aggregator.MEAN_VARIANCE:
        result = result + robust_config.variance_weight * offsets.std(axis=0, ddof=0)
    return tuple(float(v) for v in result)


# ============================================================================
# Evaluators
# ============================================================================

class ForcingObjective:
    """Pooled (RMSE, MAE) of one model run on a single forcing"""

    def __init__(self, model: ModelAdapter, wind: WindField,
                 observations: Mapping[str, StationSeries], points: Sequence[str]):
        self.model = model
        self.wind = wind
        self.observations = observations
        self.points = list(points)

    def __call__(self, theta: ParameterVector) -> ObjectiveVector:
        return pooled_objectives(self.model.evaluate(theta, self.wind), self.observations, self.points)


def evaluate_on_ensemble(theta: ParameterVector, ensemble: ForcingEnsemble, model: ModelAdapter,
                         observations: Mapping[str, StationSeries], points: Sequence[str],
                         robust_config: Optional[RobustConfig] = None,
                         workers: int = 1) -> List[ObjectiveVector]:
    """
    One pooled (RMSE, MAE) per ensemble member, in member order

    Member outputs are clamped in calm periods against the base-forcing run
    when calm suppression is enabled.

    Raises:
        EvaluationError naming the failing member
    """
    robust_config = robust_config or RobustConfig()
    suppress = robust_config.apply_calm_suppression and any(m is not ensemble.base for m in ensemble.members)
    base_series = model.evaluate(theta, ensemble.base) if suppress else None

    def run_member(k: int) -> ObjectiveVector:
        member = ensemble.members[k]
        try:
            series = model.evaluate(theta, member)
        except Exception as e:
            raise EvaluationError(f"Ensemble member {k} failed for {theta}: {e}", genotype=theta, member=k) from e
        if base_series is not None and member is not ensemble.base:
            series = [suppress_calm(s, b, robust_config.calm_threshold, robust_config.calm_overshoot)
                      for s, b in zip(series, base_series)]
        return pooled_objectives(series, observations, points)

    if workers > 1 and len(ensemble) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_member, range(len(ensemble))))
    return [run_member(k) for k in range(len(ensemble))]


class RobustEvaluator:
    """
    Genotype -> robust objective vector

    Keeps the full per-member record of every genotype for auditing.
    """

    def __init__(self, ensemble: ForcingEnsemble, model: ModelAdapter,
                 observations: Mapping[str, StationSeries], points: Sequence[str],
                 robust_config: Optional[RobustConfig] = None, member_workers: int = 1):
        self.ensemble = ensemble
        self.model = model
        self.observations = observations
        self.points = list(points)
        self.robust_config = robust_config or RobustConfig()
        self.ens_amount = self.robust_config.resolved_amount(len(ensemble))
        self.member_workers = member_workers
        self.evaluations: Dict[ParameterVector, EnsembleEvaluation] = {}
        self.lock = Lock()

    def evaluate(self, theta: ParameterVector) -> EnsembleEvaluation:
        with self.lock:
            cached = self.evaluations.get(theta)
        if cached is not None:
            return cached
        per_member = evaluate_on_ensemble(theta, self.ensemble, self.model, self.observations,
                                          self.points, self.robust_config, self.member_workers)
        selected = best_member_indices(per_member, self.ens_amount)
        aggregated = aggregate([per_member[k] for k in selected], self.robust_config)
        record = EnsembleEvaluation(theta, per_member, aggregated, selected)
        with self.lock:
            self.evaluations[theta] = record
        logger.log_evaluation({'theta': theta.as_dict(), 'aggregated': aggregated, 'selected': selected})
        return record

    def __call__(self, theta: ParameterVector) -> ObjectiveVector:
        return self.evaluate(theta).aggregated

    def audit_rows(self, result: EvolutionResult) -> List[AuditRow]:
        """Per-member objectives of every individual in the run history"""
        rows = []
        for record in result.history:
            for row in record.rows:
                evaluation = self.evaluations.get(row.genotype)
                if evaluation is None:
                    continue
                chosen = set(evaluation.selected)
                for k, objs in enumerate(evaluation.per_member):
                    rows.append(AuditRow(record.generation, row.individual, k,
                                         objs[0], objs[1], k in chosen))
        return rows


def run_rebec(ensemble: ForcingEnsemble, model: ModelAdapter,
              observations: Mapping[str, StationSeries], points: Sequence[str],
              evo_config: EvolutionConfig, robust_config: Optional[RobustConfig] = None,
              bounds: Optional[ParameterBounds] = None, jobs: int = 1,
              audit: Optional[List[AuditRow]] = None) -> EvolutionResult:
    """
    Robust calibration: the SPEA2 loop driven by ensemble objectives

    Args:
        ensemble: perturbed forcing ensemble
        model: wave model adapter
        observations: station id -> observed series
        points: calibration station ids
        evo_config: SPEA2 settings
        robust_config: member retention and aggregation
        bounds: parameter bounds
        jobs: concurrent genotype evaluations
        audit: if given, per-member audit rows are appended to it

    Returns:
        EvolutionResult
    """
    evaluator = RobustEvaluator(ensemble, model, observations, points, robust_config)
    logger.info(f"REBEC: {len(ensemble)} members, keeping best {evaluator.ens_amount} "
                f"({evaluator.robust_config.aggregator.value})")
    result = SPEA2Engine(evaluator, evo_config, bounds, jobs).run()
    if audit is not None:
        audit.extend(evaluator.audit_rows(result))
    return result
