"""
WAVECAL Experiment Manager
Run configuration, domain loading, synthetic truth, single calibrations and
the repeated baseline-vs-robust comparison over all scenarios
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from config import config
from src.core.exceptions import (BoundsError, CalibrationError, ConfigError,
                                 ExperimentAbortedError, InputFormatError)
from src.core.forcing_noise import ForcingEnsemble, WindField, generate_ensemble
from src.core.metrics import METRIC_NAMES, MetricReport, metric_report, parameter_sd, run_statistics
from src.core.param_space import (ParameterBounds, ParameterVector,
                                  default_configuration)
from src.core.scenarios import ALL_GROUP, Scenario, build_scenarios, select_scenarios
from src.core.wave_model import (BathymetryGrid, ExternalProcessModel, ModelAdapter, StationSeries,
                                 StationSet, SurrogateWaveModel, surrogate_evaluate)
from src.engines.robust_engine import AuditRow, ForcingObjective, RobustConfig, run_rebec
from src.engines.spea2_engine import EvolutionConfig, EvolutionResult, Individual, run_baseline
from src.utils.logger import CalibrationLogger
from src.utils.run_journal import SETS, RunJournal, RunRecord, write_frame

logger = CalibrationLogger.get_logger(__name__)

ALGORITHMS = ("baseline", "rebec")
REPORT_COLUMNS = ["scenario_group", "algorithm", "set", "metric", "mean_improvement",
                  "max_improvement", "sd_improvement", "param_sd"]

TOP_LEVEL_KEYS = {"paths", "bounds", "default_theta", "truth", "evolution", "robust", "noise",
                  "metrics", "experiment", "sensitivity", "external", "log_scale_sampling",
                  "seed", "jobs"}
SECTION_KEYS = {
    "paths": {"wind", "bathymetry", "stations", "observations"},
    "truth": {"theta", "noise_sd", "seed"},
    "noise": {"members", "sigma", "spacing", "calm_threshold", "calm_overshoot", "apply_calm_suppression"},
    "metrics": {"peak_quantile"},
    "experiment": {"repeats", "scenario_ids", "max_failure_fraction", "mid_sizes", "large_size"},
    "sensitivity": {"runs", "relative_sd"},
    "external": {"command", "timeout_s", "workdir"},
}


def derive_seed(*keys: int) -> int:
    """Independent 32-bit seed for a tuple of integer keys"""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


# ============================================================================
# Configuration
# ============================================================================

@dataclass
class NoiseConfig:
    members: int = config.ENSEMBLE_MEMBERS
    sigma: float = config.NOISE_SIGMA
    spacing: int = config.NOISE_SOURCE_SPACING

    def __post_init__(self):
        if self.members < 1:
            raise ConfigError(f"Ensemble members must be >= 1, got {self.members}")
        if self.sigma < 0:
            raise ConfigError(f"Noise sigma must be >= 0, got {self.sigma}")
        if self.spacing < 1:
            raise ConfigError(f"Noise source spacing must be >= 1, got {self.spacing}")


@dataclass
class ExperimentConfig:
    """Everything one CLI invocation needs; defaults come from config.py"""
    paths: Dict[str, Optional[Path]] = field(default_factory=dict)
    bounds: ParameterBounds = field(default_factory=ParameterBounds.default)
    default_theta: ParameterVector = field(default_factory=default_configuration)
    truth_theta: ParameterVector = field(default_factory=lambda: ParameterVector.from_mapping(config.TRUTH_THETA))
    truth_noise_sd: float = config.OBSERVATION_NOISE_SD
    truth_seed: Optional[int] = None
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    robust: RobustConfig = field(default_factory=RobustConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    peak_quantile: float = config.PEAK_QUANTILE
    repeats: int = config.REPEATS
    scenario_ids: Optional[List[int]] = None
    max_failure_fraction: float = config.MAX_FAILURE_FRACTION
    mid_sizes: Sequence[int] = config.MID_SUBSET_SIZES
    large_size: Optional[int] = config.LARGE_SUBSET_SIZE
    sensitivity_runs: int = config.SENSITIVITY_RUNS
    sensitivity_relative_sd: float = config.SENSITIVITY_RELATIVE_SD
    external_command: Optional[str] = config.EXTERNAL_COMMAND
    external_timeout: float = config.EXTERNAL_TIMEOUT_S
    external_workdir: Optional[Path] = None
    seed: int = config.MASTER_SEED
    jobs: int = config.JOBS

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if not 0.0 <= self.max_failure_fraction <= 1.0:
            raise ConfigError(f"max_failure_fraction must lie in [0, 1], got {self.max_failure_fraction}")
        if not 0.0 < self.peak_quantile < 1.0:
            raise ConfigError(f"peak_quantile must lie in (0, 1), got {self.peak_quantile}")
        if not self.bounds.contains(self.truth_theta):
            raise BoundsError(f"Truth theta {self.truth_theta} outside bounds {self.bounds.as_dict()}")
        for name, path in self.paths.items():
            if path is not None and not Path(path).exists():
                raise ConfigError(f"Configured {name} file does not exist: {path}")

    @property
    def observation_seed(self) -> int:
        return self.seed if self.truth_seed is None else self.truth_seed

    def with_overrides(self, seed: Optional[int] = None, jobs: Optional[int] = None,
                       repeats: Optional[int] = None) -> "ExperimentConfig":
        """CLI flags win over the file"""
        updates = {}
        if seed is not None:
            updates["seed"] = int(seed)
            updates["evolution"] = replace(self.evolution, seed=int(seed))
        if jobs is not None:
            updates["jobs"] = int(jobs)
        if repeats is not None:
            updates["repeats"] = int(repeats)
        return replace(self, **updates) if updates else self

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "ExperimentConfig":
        """Overlay a JSON document on the defaults; unknown keys are errors"""
        if not isinstance(data, Mapping):
            raise ConfigError("Configuration must be a JSON object")
        unknown = set(data) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        for section, allowed in SECTION_KEYS.items():
            extra = set(data.get(section) or {}) - allowed
            if extra:
                raise ConfigError(f"Unknown keys in '{section}': {sorted(extra)}")

        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

        def resolve(value):
            if value is None:
                return None
            path = Path(value)
            return path if path.is_absolute() else base_dir / path

        try:
            seed = int(data.get("seed", config.MASTER_SEED))
            bounds = ParameterBounds.from_mapping(data.get("bounds") or {})
            default_theta = default_configuration(bounds, data.get("default_theta"))

            truth = data.get("truth") or {}
            truth_theta = ParameterVector.from_mapping({**config.TRUTH_THETA, **(truth.get("theta") or {})})

            evolution_data = dict(data.get("evolution") or {})
            evolution_data.setdefault("seed", seed)
            if "log_scale_sampling" in data:
                evolution_data["log_scaled_init"] = bool(data["log_scale_sampling"])
            evolution = EvolutionConfig.from_mapping(evolution_data)

            noise_data = dict(data.get("noise") or {})
            calm = {k: noise_data.pop(k) for k in ("calm_threshold", "calm_overshoot", "apply_calm_suppression")
                    if k in noise_data}
            robust = RobustConfig.from_mapping({**(data.get("robust") or {}), **calm})
            noise = NoiseConfig(**noise_data)

            experiment = data.get("experiment") or {}
            sensitivity = data.get("sensitivity") or {}
            external = data.get("external") or {}
            paths = {name: resolve(value) for name, value in (data.get("paths") or {}).items()}

            return cls(
                paths=paths,
                bounds=bounds,
                default_theta=default_theta,
                truth_theta=truth_theta,
                truth_noise_sd=float(truth.get("noise_sd", config.OBSERVATION_NOISE_SD)),
                truth_seed=truth.get("seed"),
                evolution=evolution,
                robust=robust,
                noise=noise,
                peak_quantile=float((data.get("metrics") or {}).get("peak_quantile", config.PEAK_QUANTILE)),
                repeats=int(experiment.get("repeats", config.REPEATS)),
                scenario_ids=experiment.get("scenario_ids"),
                max_failure_fraction=float(experiment.get("max_failure_fraction", config.MAX_FAILURE_FRACTION)),
                mid_sizes=tuple(experiment.get("mid_sizes", config.MID_SUBSET_SIZES)),
                large_size=experiment.get("large_size", config.LARGE_SUBSET_SIZE),
                sensitivity_runs=int(sensitivity.get("runs", config.SENSITIVITY_RUNS)),
                sensitivity_relative_sd=float(sensitivity.get("relative_sd", config.SENSITIVITY_RELATIVE_SD)),
                external_command=external.get("command", config.EXTERNAL_COMMAND),
                external_timeout=float(external.get("timeout_s", config.EXTERNAL_TIMEOUT_S)),
                external_workdir=resolve(external.get("workdir")),
                seed=seed,
                jobs=int(data.get("jobs", config.JOBS)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration value: {e}") from e

    @classmethod
    def from_json(cls, path: Optional[Path]) -> "ExperimentConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Configuration file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        return cls.from_dict(data, base_dir=path.parent)


# ============================================================================
# Domain and truth
# ============================================================================

@dataclass
class Domain:
    bathy: BathymetryGrid
    stations: StationSet
    wind: WindField


def load_domain(cfg: ExperimentConfig) -> Domain:
    """Read the configured files, or build the synthetic domain when none are given"""
    from src.utils.formats import read_bathymetry, read_station_list, read_wind_field
    from src.utils.synthetic_domain import build_synthetic_domain

    given = {k: cfg.paths.get(k) for k in ("wind", "bathymetry", "stations")}
    if not any(given.values()):
        synthetic = build_synthetic_domain(cfg.seed)
        return Domain(synthetic.bathy, synthetic.stations, synthetic.wind)
    missing = [k for k, v in given.items() if v is None]
    if missing:
        raise ConfigError(f"Domain files must be given together; missing paths: {missing}")

    bathy = read_bathymetry(given["bathymetry"])
    stations = read_station_list(given["stations"])
    wind = read_wind_field(given["wind"])
    if (wind.ny, wind.nx) != bathy.depth.shape:
        raise InputFormatError(f"Wind grid {wind.ny}x{wind.nx} does not match bathymetry {bathy.ny}x{bathy.nx}")
    stations.validate(bathy)
    logger.info(f"Loaded domain: {bathy.nx}x{bathy.ny} grid, {len(stations)} stations, {wind.nt} steps")
    return Domain(bathy, stations, wind)


def make_truth(theta_star: ParameterVector, wind: WindField, bathy: BathymetryGrid, stations: StationSet,
               noise_sd: float = config.OBSERVATION_NOISE_SD, seed: int = config.MASTER_SEED,
               bounds: Optional[ParameterBounds] = None) -> Dict[str, StationSeries]:
    """
    Synthetic observations: surrogate output at theta_star on the base wind

    Optional i.i.d. Gaussian observation noise, clipped so Hs stays >= 0.
    """
    bounds = bounds or ParameterBounds.default()
    if not bounds.contains(theta_star):
        raise BoundsError(f"Truth theta {theta_star} outside bounds {bounds.as_dict()}")
    if noise_sd < 0:
        raise ConfigError(f"Observation noise SD must be >= 0, got {noise_sd}")

    series = surrogate_evaluate(theta_star, wind, bathy, stations)
    if noise_sd > 0:
        rng = np.random.default_rng(seed)
        series = [replace(s, hs=np.maximum(s.hs + rng.normal(0.0, noise_sd, s.hs.shape), 0.0)) for s in series]
    logger.info(f"Truth generated at {theta_star.as_dict()} (noise sd {noise_sd} m)")
    return {s.station_id: s for s in series}


def load_observations(cfg: ExperimentConfig, domain: Domain) -> Dict[str, StationSeries]:
    path = cfg.paths.get("observations")
    if path is None:
        return make_truth(cfg.truth_theta, domain.wind, domain.bathy, domain.stations,
                          cfg.truth_noise_sd, cfg.observation_seed, cfg.bounds)
    from src.utils.formats import read_station_csv
    observations = read_station_csv(path)
    absent = [sid for sid in domain.stations.ids if sid not in observations]
    if absent:
        raise InputFormatError(f"{path}: observations lack stations {absent}")
    return observations


def make_model(cfg: ExperimentConfig, domain: Domain, scratch: Optional[Path] = None) -> ModelAdapter:
    """Surrogate unless an external command is configured"""
    if cfg.external_command:
        workdir = scratch or cfg.external_workdir or Path(config.RUNS_DIR) / "external"
        return ExternalProcessModel(cfg.external_command, domain.stations, workdir, cfg.external_timeout)
    return SurrogateWaveModel(domain.bathy, domain.stations)


# ============================================================================
# Calibration
# ============================================================================

@dataclass
class CalibrationOutcome:
    algorithm: str
    seed: int
    result: EvolutionResult
    best: Individual
    ensemble: Optional[ForcingEnsemble] = None
    audit: List[AuditRow] = field(default_factory=list)


def ensemble_seed(seed: int) -> int:
    return derive_seed(seed, 1)


def calibrate(algorithm: str, cfg: ExperimentConfig, domain: Domain, observations: Mapping[str, StationSeries],
              points: Sequence[str], seed: int, model: Optional[ModelAdapter] = None, jobs: int = 1,
              audit: bool = False) -> CalibrationOutcome:
    """
    One calibration run on the given calibration points

    Args:
        algorithm: baseline or rebec
        cfg: run configuration
        domain: bathymetry, stations and base wind
        observations: station id -> observed series
        points: calibration station ids
        seed: run seed (LHS, selection and variation); the forcing
            ensemble uses a seed derived from it
        model: adapter, built from cfg when omitted
        jobs: concurrent genotype evaluations
        audit: collect per-member audit rows (rebec only)

    Returns:
        CalibrationOutcome with the archive's best individual
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"Unknown algorithm '{algorithm}' (expected one of {ALGORITHMS})")
    model = model or make_model(cfg, domain)
    evo = replace(cfg.evolution, seed=int(seed))

    if algorithm == "baseline":
        objective = ForcingObjective(model, domain.wind, observations, points)
        result = run_baseline(objective, evo, cfg.bounds, jobs)
        return CalibrationOutcome(algorithm, seed, result, result.best())

    ensemble = generate_ensemble(domain.wind, cfg.noise.members, cfg.noise.sigma, cfg.noise.spacing,
                                 ensemble_seed(seed))
    rows: List[AuditRow] = []
    result = run_rebec(ensemble, model, observations, points, evo, cfg.robust, cfg.bounds, jobs,
                       audit=rows if audit else None)
    return CalibrationOutcome(algorithm, seed, result, result.best(), ensemble, rows)


def assess(theta: ParameterVector, model: ModelAdapter, wind: WindField,
           observations: Mapping[str, StationSeries], points: Sequence[str],
           q: float = config.PEAK_QUANTILE) -> MetricReport:
    """All metrics of one configuration on the unperturbed forcing"""
    return metric_report(model.evaluate(theta, wind), observations, points, q)


# ============================================================================
# Experiment
# ============================================================================

@dataclass
class ExperimentResult:
    records: List[RunRecord]
    report: pd.DataFrame
    scenarios: List[Scenario]


def _run_job(cfg: ExperimentConfig, domain: Domain, observations, scenario: Scenario, algorithm: str,
             repeat: int, defaults: Dict[str, MetricReport], scratch: Optional[Path]) -> RunRecord:
    seed = derive_seed(cfg.seed, scenario.id, repeat)
    record = RunRecord(scenario.id, scenario.group, algorithm, repeat, seed)
    try:
        model = make_model(cfg, domain, scratch)
        outcome = calibrate(algorithm, cfg, domain, observations, scenario.calibration, seed, model)
        record.genotype = outcome.best.genotype
        for set_name, points in (("calibration", scenario.calibration), ("validation", scenario.validation)):
            report = assess(record.genotype, model, domain.wind, observations, points, cfg.peak_quantile)
            record.errors[set_name] = dict(report.pooled)
            record.improvements[set_name] = report.improvements_over(defaults[set_name])
    except CalibrationError as e:
        record.status = "failed"
        record.message = str(e).splitlines()[0]
    return record


def run_experiment(cfg: ExperimentConfig, domain: Domain, observations: Mapping[str, StationSeries],
                   out_dir: Path) -> ExperimentResult:
    """
    Repeated baseline and robust calibrations over every scenario

    Each (scenario, algorithm, repeat) is an independent job on a bounded
    worker pool; its seed depends only on (master seed, scenario, repeat),
    so both algorithms start from the same population. Writes runs.csv and
    report.csv into out_dir.

    Raises:
        ExperimentAbortedError when the failed share exceeds the limit
    """
    out_dir = Path(out_dir)
    scenarios = select_scenarios(
        build_scenarios(domain.stations, cfg.seed, cfg.mid_sizes, large_size=cfg.large_size),
        cfg.scenario_ids,
    )
    default_model = make_model(cfg, domain, out_dir / "scratch" / "default")
    defaults = {
        s.id: {
            "calibration": assess(cfg.default_theta, default_model, domain.wind, observations,
                                  s.calibration, cfg.peak_quantile),
            "validation": assess(cfg.default_theta, default_model, domain.wind, observations,
                                 s.validation, cfg.peak_quantile),
        }
        for s in scenarios
    }

    jobs = [(s, algorithm, repeat) for s in scenarios for algorithm in ALGORITHMS for repeat in range(cfg.repeats)]
    logger.info("=" * 80)
    logger.info(f"EXPERIMENT: {len(scenarios)} scenarios x {len(ALGORITHMS)} algorithms x {cfg.repeats} "
                f"repeats = {len(jobs)} runs on {cfg.jobs} worker(s)")
    logger.info("=" * 80)

    journal = RunJournal()

    def work(job):
        scenario, algorithm, repeat = job
        scratch = out_dir / "scratch" / f"s{scenario.id}_{algorithm}_{repeat}" if cfg.external_command else None
        journal.add(_run_job(cfg, domain, observations, scenario, algorithm, repeat, defaults[scenario.id], scratch))

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            list(pool.map(work, jobs))
    else:
        for job in jobs:
            work(job)

    journal.write(out_dir / "runs.csv")
    failures = journal.failures
    if failures / len(jobs) > cfg.max_failure_fraction:
        raise ExperimentAbortedError(f"{failures} of {len(jobs)} runs failed "
                                     f"(limit {cfg.max_failure_fraction:.0%}); see runs.csv")
    if failures:
        logger.warning(f"{failures} of {len(jobs)} runs failed and are excluded from the report")

    records = journal.sorted_records()
    report = aggregate_report(records)
    write_frame(report, out_dir / "report.csv")
    logger.info(f"Experiment complete: {len(records) - failures} successful runs, report in {out_dir}")
    return ExperimentResult(records, report, scenarios)


def aggregate_report(records: Sequence[RunRecord]) -> pd.DataFrame:
    """
    Improvement statistics per (group, algorithm, set, metric), plus "All"

    param_sd is the parameter spread over repeats within each scenario,
    averaged over the group's scenarios (NaN with fewer than 2 repeats).
    """
    ok = [r for r in records if r.ok]
    rows = []
    for r in ok:
        for set_name in SETS:
            for metric in METRIC_NAMES:
                value = r.improvements[set_name][metric]
                for group in (r.group, ALL_GROUP):
                    rows.append((group, r.algorithm, set_name, metric, r.scenario, value))
    if not rows:
        return pd.DataFrame(columns=REPORT_COLUMNS)

    long = pd.DataFrame(rows, columns=["scenario_group", "algorithm", "set", "metric", "scenario", "improvement"])
    if long["improvement"].isna().any():
        logger.warning(f"{int(long['improvement'].isna().sum())} undefined improvements skipped in the report")

    spreads = {}
    for (group, algorithm), sub in pd.DataFrame(
            [(g, r.algorithm, r.scenario, r) for r in ok for g in (r.group, ALL_GROUP)],
            columns=["group", "algorithm", "scenario", "record"]).groupby(["group", "algorithm"], sort=False):
        per_scenario = [parameter_sd([rec.genotype for rec in s["record"]])
                        for _, s in sub.groupby("scenario", sort=True) if len(s) >= 2]
        spreads[(group, algorithm)] = float(np.mean(per_scenario)) if per_scenario else float("nan")

    order = {g: k for k, g in enumerate(dict.fromkeys(r.group for r in ok))}
    order[ALL_GROUP] = len(order)
    report = []
    for (group, algorithm, set_name, metric), sub in long.groupby(
            ["scenario_group", "algorithm", "set", "metric"], sort=False):
        stats = run_statistics(sub["improvement"].tolist(), [])
        report.append((group, algorithm, set_name, metric, stats.mean, stats.max, stats.sd,
                       spreads[(group, algorithm)]))

    frame = pd.DataFrame(report, columns=REPORT_COLUMNS)
    frame["_g"] = frame["scenario_group"].map(order)
    frame["_a"] = frame["algorithm"].map({a: k for k, a in enumerate(ALGORITHMS)})
    frame["_s"] = frame["set"].map({s: k for k, s in enumerate(SETS)})
    frame["_m"] = frame["metric"].map({m: k for k, m in enumerate(METRIC_NAMES)})
    return frame.sort_values(["_g", "_a", "_s", "_m"], kind="stable") \
        .drop(columns=["_g", "_a", "_s", "_m"]).reset_index(drop=True)
