#!/usr/bin/env python3
"""
Desk-scale acceptance run: SPEA2 oracle, toy Pareto front, parameter
recovery, robust/baseline reduction, noise statistics, sensitivity
ordering, metric values and experiment determinism.

    python scripts/validate_acceptance.py          # quick checks
    python scripts/validate_acceptance.py --full   # adds the robustness trend (~30 min)
"""
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path
ROOT = Path(__file__).resolve().parents[1]
sys.path.append(str(ROOT))

import numpy as np

from src.core.experiment_manager import (Domain, ExperimentConfig, calibrate, load_observations,
                                         make_model, run_experiment)
from src.core.forcing_noise import NoiseFieldGenerator, ensemble_rms_perturbation, generate_ensemble, scatter_sources
from src.core.metrics import improvement, mae, rmse
from src.core.param_space import ParameterVector
from src.core.scenarios import build_scenarios, select_scenarios
from src.engines.robust_engine import ForcingObjective, run_rebec
from src.engines.sensitivity_engine import run_sensitivity
from src.engines.spea2_engine import (EvolutionConfig, Individual, assign_fitness, dominates,
                                      environmental_selection, run_baseline)
from src.utils.logger import CalibrationLogger, set_log_level
from src.utils.synthetic_domain import build_synthetic_domain

logger = CalibrationLogger.get_logger(__name__)

DEFAULT_TRUTH = {"drg": 1.0, "cfw": 0.015, "stpm": 0.00302}


def synthetic() -> Domain:
    d = build_synthetic_domain()
    return Domain(d.bathy, d.stations, d.wind)


def check_spea2_oracle() -> bool:
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(5, 31))
        objs = rng.random((n, 2))
        pool = [Individual(ParameterVector(1.0, 0.01, 0.003), tuple(o)) for o in objs]
        assign_fitness(pool)
        brute = {i for i in range(n) if not any(dominates(objs[j], objs[i]) for j in range(n) if j != i)}
        if {i for i, ind in enumerate(pool) if ind.fitness < 1} != brute:
            return False
        capacity = int(rng.integers(2, 8))
        archive = environmental_selection(pool, capacity)
        if len(brute) >= capacity:
            if any(dominates(a.objectives, b.objectives) for a in archive for b in archive):
                return False
    return True


def check_toy_front() -> bool:
    result = run_baseline(lambda g: (g.drg ** 2, (g.drg - 1.0) ** 2),
                          EvolutionConfig(population_size=20, generations=60, seed=3))
    in_range = all(-0.02 <= ind.genotype.drg <= 1.02 for ind in result.archive)
    non_dominated = not any(dominates(a.objectives, b.objectives) for a in result.archive for b in result.archive)
    return in_range and non_dominated


def check_recovery(domain: Domain) -> bool:
    cfg = ExperimentConfig(truth_theta=ParameterVector.from_mapping(DEFAULT_TRUTH))
    observations = load_observations(cfg, domain)
    scenario = select_scenarios(build_scenarios(domain.stations, cfg.seed), [15])[0]
    model = make_model(cfg, domain)
    hits = 0
    for seed in range(20):
        outcome = calibrate("baseline", cfg, domain, observations, scenario.calibration, seed, model)
        best = outcome.best
        if best.objectives[0] < 0.02 and abs(best.genotype.drg - 1.0) <= 0.05:
            hits += 1
    print(f"   recovered in {hits}/20 repeats")
    return hits >= 18


def check_reduction(domain: Domain) -> bool:
    cfg = ExperimentConfig()
    observations = load_observations(cfg, domain)
    model = make_model(cfg, domain)
    points = domain.stations.ids
    ensemble = generate_ensemble(domain.wind, 10, 0.0, seed=11)
    for seed in range(5):
        evo = replace(cfg.evolution, seed=seed, generations=20)
        base = run_baseline(ForcingObjective(model, domain.wind, observations, points), evo)
        robust = run_rebec(ensemble, model, observations, points, evo, cfg.robust)
        if [(i.genotype, i.objectives) for i in base.archive] != [(i.genotype, i.objectives) for i in robust.archive]:
            return False
    return True


def check_noise_statistics(domain: Domain) -> bool:
    wind = domain.wind
    generator = NoiseFieldGenerator(wind, scatter_sources(wind.nx, wind.ny, 10, 5), 0.25, 5)
    total = np.zeros((2,) + wind.shape)
    total_sq = np.zeros_like(total)
    n = 100
    for k in range(n):
        noise = np.stack(generator.member_noise(k))
        total += noise
        total_sq += noise * noise
    mean = total / n
    sd = np.sqrt(np.maximum(total_sq / n - mean ** 2, 0.0) * n / (n - 1))
    active = sd > 0
    share = float(np.mean(np.abs(mean[active]) <= 3 * sd[active] / np.sqrt(n)))
    print(f"   {share:.2%} of cells within 3 standard errors")

    rms_high = ensemble_rms_perturbation(generate_ensemble(wind, 10, 0.25, seed=7))
    rms_low = ensemble_rms_perturbation(generate_ensemble(wind, 10, 0.1, seed=7))
    return share >= 0.99 and rms_high > rms_low > 0


def check_sensitivity(domain: Domain) -> bool:
    base = ParameterVector.from_mapping(DEFAULT_TRUTH)
    depth20 = [s.id for s in domain.stations if 15.0 <= domain.bathy.depth[s.iy, s.ix] <= 25.0]
    medians = {}
    for name in ("drg", "cfw", "stpm"):
        table = run_sensitivity(name, 50, 0.25, base, domain.wind, domain.bathy, domain.stations, 9).table
        medians[name] = float(table[table["station"].isin(depth20)]["rel_rmse"].median())
    print(f"   medians at depth-20 stations: {medians}")
    return medians["drg"] > medians["stpm"] > medians["cfw"]


def check_metrics() -> bool:
    rng = np.random.default_rng(0)
    residuals_ok = all(mae(r, np.zeros(r.size)) <= rmse(r, np.zeros(r.size)) + 1e-12
                       for r in (rng.normal(size=int(rng.integers(1, 50))) for _ in range(1000)))
    return (abs(rmse([0, 0], [3, 4]) - 3.5355339059) < 1e-9 and mae([0, 0], [3, 4]) == 3.5
            and residuals_ok and improvement(1.7, 1.7) == 0.0)


def check_determinism(domain: Domain, full: bool) -> bool:
    cfg = ExperimentConfig(repeats=20 if full else 2)
    if not full:
        cfg = replace(cfg, evolution=replace(cfg.evolution, generations=5), scenario_ids=[1, 10, 15])
    observations = load_observations(cfg, domain)
    with tempfile.TemporaryDirectory() as tmp:
        serial = run_experiment(replace(cfg, jobs=1), domain, observations, Path(tmp) / "serial")
        parallel = run_experiment(replace(cfg, jobs=8), domain, observations, Path(tmp) / "parallel")
        return (Path(tmp) / "serial" / "report.csv").read_bytes() == \
            (Path(tmp) / "parallel" / "report.csv").read_bytes() and serial.report.equals(parallel.report)


def check_robustness_trend(domain: Domain) -> bool:
    cfg = ExperimentConfig(repeats=20, jobs=8)
    observations = load_observations(cfg, domain)
    with tempfile.TemporaryDirectory() as tmp:
        report = run_experiment(cfg, domain, observations, Path(tmp)).report
    val = report[report["set"] == "validation"]
    groups = [g for g in val["scenario_group"].unique() if g != "All"]
    sd_wins = mae_wins = 0
    for group in groups:
        rows = val[val["scenario_group"] == group].set_index(["algorithm", "metric"])
        if rows.loc[("rebec", "rmse"), "sd_improvement"] <= rows.loc[("baseline", "rmse"), "sd_improvement"]:
            sd_wins += 1
        if rows.loc[("rebec", "mae"), "mean_improvement"] > rows.loc[("baseline", "mae"), "mean_improvement"]:
            mae_wins += 1
    print(f"   SD wins {sd_wins}/{len(groups)}, MAE wins {mae_wins}/{len(groups)}")
    return sd_wins >= 2 and mae_wins >= 2


def validate_all(full: bool = False) -> bool:
    print("=" * 80)
    print("WAVECAL ACCEPTANCE VALIDATION")
    print("=" * 80)
    set_log_level("WARNING")
    domain = synthetic()

    checks = [
        ("SPEA2 fitness/selection oracle", check_spea2_oracle),
        ("Toy Pareto front recovery", check_toy_front),
        ("Parameter recovery on scenario 15", lambda: check_recovery(domain)),
        ("Robust/baseline reduction at sigma = 0", lambda: check_reduction(domain)),
        ("Noise field statistics", lambda: check_noise_statistics(domain)),
        ("Sensitivity ordering", lambda: check_sensitivity(domain)),
        ("Metric values", check_metrics),
        ("Experiment determinism across worker counts", lambda: check_determinism(domain, full)),
    ]
    if full:
        checks.append(("Robustness trend", lambda: check_robustness_trend(domain)))

    passed = True
    for k, (name, check) in enumerate(checks, start=1):
        print(f"\n[{k}] {name}...")
        start = time.time()
        try:
            ok = check()
        except Exception as e:
            logger.exception(f"{name} raised")
            print(f"❌ {name} error: {e}")
            ok = False
        print(f"{'✅' if ok else '❌'} {name} ({time.time() - start:.1f}s)")
        passed = passed and ok

    print("\n" + "=" * 80)
    print("✅ ALL ACCEPTANCE CHECKS PASSED" if passed else "❌ SOME ACCEPTANCE CHECKS FAILED")
    print("=" * 80)
    return passed


if __name__ == '__main__':
    sys.exit(0 if validate_all("--full" in sys.argv[1:]) else 1)
