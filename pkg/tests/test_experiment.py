"""Run configuration, single calibrations and the repeated experiment"""

import json
import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from src.core import experiment_manager
from src.core.exceptions import BoundsError, ConfigError, EvaluationError, ExperimentAbortedError
from src.core.experiment_manager import (REPORT_COLUMNS, ExperimentConfig, aggregate_report, calibrate,
                                         derive_seed, load_domain, load_observations, make_model, make_truth,
                                         run_experiment)
from src.core.param_space import ParameterVector
from src.core.scenarios import build_scenarios, select_scenarios
from src.engines.robust_engine import Aggregator
from src.utils import formats
from src.utils.run_journal import read_runs

TRUTH = ParameterVector(1.3, 0.03, 0.0045)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.seed == 2014 and cfg.repeats == 20
        assert cfg.default_theta == ParameterVector(1.0, 0.015, 0.00302)

    def test_overlay(self):
        cfg = ExperimentConfig.from_dict({
            "seed": 7,
            "evolution": {"generations": 3},
            "robust": {"aggregator": "mean_variance", "variance_weight": 0.5},
            "noise": {"members": 4, "calm_threshold": 0.3},
            "experiment": {"repeats": 2, "scenario_ids": [1, 2]},
            "log_scale_sampling": True,
        })
        assert cfg.seed == 7 and cfg.evolution.seed == 7
        assert cfg.evolution.generations == 3 and cfg.evolution.log_scaled_init
        assert cfg.robust.aggregator is Aggregator.MEAN_VARIANCE
        assert cfg.robust.calm_threshold == 0.3
        assert cfg.noise.members == 4
        assert cfg.repeats == 2 and cfg.scenario_ids == [1, 2]

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"sead": 1})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"evolution": {"popsize": 10}})

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"experiment": {"repeats": 0}})
        with pytest.raises(BoundsError):
            ExperimentConfig.from_dict({"bounds": {"drg": [1.0, 2.0]}})
        with pytest.raises(BoundsError):
            ExperimentConfig.from_dict({"truth": {"theta": {"drg": 5.0}}})

    def test_json_file(self, tmp_path):
        (tmp_path / "wind.wfld").write_text("")
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"paths": {"wind": "wind.wfld"}, "jobs": 2}))
        cfg = ExperimentConfig.from_json(path)
        assert cfg.paths["wind"] == tmp_path / "wind.wfld"
        assert cfg.jobs == 2

    def test_json_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            ExperimentConfig.from_json(tmp_path / "absent.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{seed: 1")
        with pytest.raises(ConfigError, match="invalid JSON"):
            ExperimentConfig.from_json(bad)
        missing = tmp_path / "missing.json"
        missing.write_text(json.dumps({"paths": {"wind": "nowhere.wfld"}}))
        with pytest.raises(ConfigError, match="does not exist"):
            ExperimentConfig.from_json(missing)

    def test_cli_overrides(self):
        cfg = ExperimentConfig().with_overrides(seed=5, jobs=3, repeats=4)
        assert (cfg.seed, cfg.evolution.seed, cfg.jobs, cfg.repeats) == (5, 5, 3, 4)

    def test_derive_seed(self):
        assert derive_seed(2014, 3, 1) == derive_seed(2014, 3, 1)
        assert len({derive_seed(2014, s, r) for s in range(5) for r in range(5)}) == 25


class TestDomainAndTruth:
    def test_domain_files(self, tmp_path, small_domain):
        formats.write_wind_field(small_domain.wind, tmp_path / "wind.wfld")
        formats.write_bathymetry(small_domain.bathy, tmp_path / "bathy.bath")
        formats.write_station_list(small_domain.stations, tmp_path / "stations.csv")
        cfg = ExperimentConfig(paths={"wind": tmp_path / "wind.wfld", "bathymetry": tmp_path / "bathy.bath",
                                      "stations": tmp_path / "stations.csv"})
        domain = load_domain(cfg)
        assert domain.stations == small_domain.stations
        np.testing.assert_array_equal(domain.wind.u, small_domain.wind.u)

    def test_partial_paths_rejected(self, tmp_path, small_domain):
        formats.write_wind_field(small_domain.wind, tmp_path / "wind.wfld")
        with pytest.raises(ConfigError, match="together"):
            load_domain(ExperimentConfig(paths={"wind": tmp_path / "wind.wfld"}))

    def test_noise_free_truth(self, small_domain):
        obs = make_truth(TRUTH, small_domain.wind, small_domain.bathy, small_domain.stations)
        assert list(obs) == small_domain.stations.ids

    def test_noisy_truth_clipped_and_seeded(self, small_domain):
        args = (TRUTH, small_domain.wind, small_domain.bathy, small_domain.stations, 5.0)
        a = make_truth(*args, seed=3)
        b = make_truth(*args, seed=3)
        assert all(np.array_equal(a[k].hs, b[k].hs) for k in a)
        assert all(np.all(s.hs >= 0.0) for s in a.values())
        assert any(np.any(s.hs == 0.0) for s in a.values())

    def test_observations_file(self, tmp_path, small_domain):
        obs = make_truth(TRUTH, small_domain.wind, small_domain.bathy, small_domain.stations)
        formats.write_station_csv(list(obs.values())[:2], tmp_path / "obs.csv")
        cfg = ExperimentConfig(paths={"observations": tmp_path / "obs.csv"})
        with pytest.raises(Exception, match="lack stations"):
            load_observations(cfg, small_domain)


class TestCalibrate:
    def test_baseline_and_rebec_agree_without_noise(self, small_domain, small_config):
        cfg = replace(small_config, noise=replace(small_config.noise, sigma=0.0))
        observations = load_observations(cfg, small_domain)
        points = small_domain.stations.ids[:2]
        base = calibrate("baseline", cfg, small_domain, observations, points, seed=4)
        robust = calibrate("rebec", cfg, small_domain, observations, points, seed=4)
        assert base.best.genotype == robust.best.genotype
        assert base.best.objectives == robust.best.objectives

    def test_rebec_audit(self, small_domain, small_config):
        observations = load_observations(small_config, small_domain)
        outcome = calibrate("rebec", small_config, small_domain, observations, ["S1"], seed=4, audit=True)
        assert len(outcome.ensemble) == 3
        assert outcome.audit and {row.member for row in outcome.audit} == {0, 1, 2}

    def test_unknown_algorithm(self, small_domain, small_config):
        with pytest.raises(ConfigError):
            calibrate("nsga2", small_config, small_domain, {}, ["S1"], seed=1)


class TestExperiment:
    def test_report_layout(self, tmp_path, small_domain, small_config):
        observations = load_observations(small_config, small_domain)
        result = run_experiment(small_config, small_domain, observations, tmp_path)
        report = result.report

        assert list(report.columns) == REPORT_COLUMNS
        assert list(report["scenario_group"].unique()) == ["1-4", "5-9", "10-13", "All"]
        assert len(report) == 4 * 2 * 2 * 4
        assert list(report["metric"][:4]) == ["rmse", "mae", "peak_rmse", "peak_mae"]
        assert list(report["set"].unique()) == ["calibration", "validation"]
        assert not report["param_sd"].isna().any()

        runs = pd.read_csv(tmp_path / "runs.csv")
        assert len(runs) == 3 * 2 * 2
        assert (runs["status"] == "ok").all()
        assert (tmp_path / "report.csv").exists()

    def test_seeds_shared_across_algorithms(self, tmp_path, small_domain, small_config):
        observations = load_observations(small_config, small_domain)
        records = run_experiment(small_config, small_domain, observations, tmp_path).records
        seeds = {}
        for r in records:
            seeds.setdefault((r.scenario, r.repeat), set()).add(r.seed)
        assert all(len(s) == 1 for s in seeds.values())
        assert len({next(iter(s)) for s in seeds.values()}) == len(seeds)

    def test_report_recomputable_from_runs(self, tmp_path, small_domain, small_config):
        observations = load_observations(small_config, small_domain)
        result = run_experiment(small_config, small_domain, observations, tmp_path)
        recomputed = aggregate_report(read_runs(tmp_path / "runs.csv"))
        pd.testing.assert_frame_equal(recomputed, result.report)

    def test_independent_of_worker_count(self, tmp_path, small_domain, small_config):
        observations = load_observations(small_config, small_domain)
        run_experiment(small_config, small_domain, observations, tmp_path / "serial")
        run_experiment(replace(small_config, jobs=4), small_domain, observations, tmp_path / "parallel")
        for name in ("runs.csv", "report.csv"):
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()

    def test_all_group_pools_every_run(self, tmp_path, small_domain, small_config):
        observations = load_observations(small_config, small_domain)
        result = run_experiment(small_config, small_domain, observations, tmp_path)
        ok = [r for r in result.records if r.algorithm == "baseline"]
        values = [r.improvements["validation"]["rmse"] for r in ok]
        row = result.report.query("scenario_group == 'All' and algorithm == 'baseline' "
                                  "and set == 'validation' and metric == 'rmse'").iloc[0]
        assert row["mean_improvement"] == pytest.approx(np.mean(values))
        assert row["max_improvement"] == pytest.approx(np.max(values))
        assert row["sd_improvement"] == pytest.approx(np.std(values, ddof=1))

    def test_single_repeat_has_no_spread(self, tmp_path, small_domain, small_config):
        cfg = replace(small_config, repeats=1, scenario_ids=[1])
        observations = load_observations(cfg, small_domain)
        report = run_experiment(cfg, small_domain, observations, tmp_path).report
        assert report["param_sd"].isna().all()
        assert (report["sd_improvement"] == 0.0).all()

    def test_failures_abort_above_limit(self, tmp_path, small_domain, small_config, monkeypatch):
        real = experiment_manager.calibrate

        def flaky(algorithm, *args, **kwargs):
            if algorithm == "rebec":
                raise EvaluationError("ensemble member 2 failed")
            return real(algorithm, *args, **kwargs)

        monkeypatch.setattr(experiment_manager, "calibrate", flaky)
        observations = load_observations(small_config, small_domain)
        with pytest.raises(ExperimentAbortedError):
            run_experiment(small_config, small_domain, observations, tmp_path / "strict")
        runs = pd.read_csv(tmp_path / "strict" / "runs.csv")
        assert (runs[runs["algorithm"] == "rebec"]["status"] == "failed").all()
        assert not (tmp_path / "strict" / "report.csv").exists()

        tolerant = replace(small_config, max_failure_fraction=0.6)
        report = run_experiment(tolerant, small_domain, observations, tmp_path / "tolerant").report
        assert set(report["algorithm"]) == {"baseline"}
        records = read_runs(tmp_path / "tolerant" / "runs.csv")
        failed = [r for r in records if not r.ok]
        assert failed and all(r.genotype is None and math.isnan(r.errors["validation"]["rmse"]) for r in failed)
        assert failed[0].message == "ensemble member 2 failed"


class TestRecovery:
    def test_default_configuration_recovered_on_large_scenario(self, synthetic):
        cfg = ExperimentConfig(truth_theta=ParameterVector(1.0, 0.015, 0.00302))
        observations = load_observations(cfg, synthetic)
        scenario = select_scenarios(build_scenarios(synthetic.stations, cfg.seed), [15])[0]
        model = make_model(cfg, synthetic)
        outcomes = [calibrate("baseline", cfg, synthetic, observations, scenario.calibration, seed, model)
                    for seed in range(3)]
        hits = [o.best for o in outcomes
                if o.best.objectives[0] < 0.05 and abs(o.best.genotype.drg - 1.0) <= 0.1]
        assert len(hits) >= 2
