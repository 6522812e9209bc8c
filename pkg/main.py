"""
WAVECAL Command Line
Forcing ensembles, synthetic truth, single calibrations, the repeated
baseline-vs-robust experiment, sensitivity analysis and error surfaces
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

# Utils
from src.utils.logger import CalibrationLogger, set_log_level
from src.utils.run_session import RunSession
from src.utils import formats
from src.utils.run_journal import archive_frame, audit_frame, history_frame, write_frame

# Core
from src.core.exceptions import CalibrationError, ConfigError
from src.core.experiment_manager import (ALGORITHMS, ExperimentConfig, assess, calibrate, ensemble_seed,
                                         load_domain, load_observations, make_model, run_experiment)
from src.core.forcing_noise import generate_ensemble
from src.core.param_space import PARAMETER_NAMES
from src.core.scenarios import build_scenarios, select_scenarios

# Engines
from src.engines.sensitivity_engine import run_all_sensitivities, run_sensitivity
from src.engines.surface_engine import GridSpec, error_surface

logger = CalibrationLogger.get_logger(__name__)

COMMANDS = ("gen-wind-noise", "make-truth", "calibrate", "experiment", "sensitivity", "surface")


class CLIParser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error status"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the configuration)")
    common.add_argument("--out", type=Path, help="run directory")
    common.add_argument("--jobs", type=int, help="parallel workers")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="console log level")

    parser = CLIParser(prog="wavecal", description="Robust evolutionary calibration of wave models")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}",
                                parser_class=CLIParser)
    sub.required = True

    p = sub.add_parser("gen-wind-noise", parents=[common], help="write a perturbed forcing ensemble")
    p.add_argument("--members", type=int, help="ensemble size")
    p.add_argument("--sigma", type=float, help="relative noise scale")

    sub.add_parser("make-truth", parents=[common], help="write domain files and synthetic observations")

    p = sub.add_parser("calibrate", parents=[common], help="one calibration run")
    p.add_argument("--algo", choices=ALGORITHMS, default="rebec")
    p.add_argument("--scenario", type=int, help="calibrate on this scenario's points (default: all stations)")
    p.add_argument("--audit", action="store_true", help="write per-member audit CSV (rebec)")

    p = sub.add_parser("experiment", parents=[common], help="repeated baseline-vs-rebec comparison")
    p.add_argument("--repeats", type=int, help="repeats per scenario and algorithm")

    p = sub.add_parser("sensitivity", parents=[common], help="one-at-a-time parameter sensitivity")
    p.add_argument("--param", choices=PARAMETER_NAMES, help="single parameter (default: all)")
    p.add_argument("--runs", type=int, help="perturbations per parameter")

    p = sub.add_parser("surface", parents=[common], help="pooled-RMSE scan over two parameters")
    p.add_argument("--x", dest="x_name", choices=PARAMETER_NAMES, default="drg")
    p.add_argument("--y", dest="y_name", choices=PARAMETER_NAMES, default="stpm")
    p.add_argument("--nx", type=int, default=21)
    p.add_argument("--ny", type=int, default=21)
    p.add_argument("--ensemble", action="store_true", help="one surface per forcing ensemble member")
    return parser


class WavecalCLI:
    """Dispatches one subcommand inside a RunSession"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg = ExperimentConfig.from_json(args.config).with_overrides(
            seed=args.seed, jobs=args.jobs, repeats=getattr(args, "repeats", None))
        self.session = RunSession(args.command, args.out, self.cfg.seed)
        self.out = self.session.run_dir

    def _write(self, frame, name: str):
        path = write_frame(frame, self.session.path(name))
        self.session.record_output(path)
        return path

    def _write_json(self, data, name: str):
        path = self.session.path(name)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        self.session.record_output(path)

    def run(self) -> int:
        handler = getattr(self, "cmd_" + self.args.command.replace("-", "_"))
        logger.info("=" * 80)
        logger.info(f"WAVECAL {self.args.command.upper()} (seed {self.cfg.seed}) -> {self.out}")
        logger.info("=" * 80)
        try:
            handler()
        except CalibrationError as e:
            self.session.log_error(type(e).__name__, str(e))
            self.session.end("FAILED")
            raise
        self.session.end("OK")
        return 0

    # ------------------------------------------------------------------
    # Subcommands
    # ------------------------------------------------------------------

    def cmd_gen_wind_noise(self):
        domain = load_domain(self.cfg)
        members = self.args.members or self.cfg.noise.members
        sigma = self.cfg.noise.sigma if self.args.sigma is None else self.args.sigma
        ensemble = generate_ensemble(domain.wind, members, sigma, self.cfg.noise.spacing,
                                     ensemble_seed(self.cfg.seed), workers=self.cfg.jobs)
        for k, member in enumerate(ensemble.members):
            path = self.out / f"member_{k:02d}.wfld"
            formats.write_wind_field(member, path)
            self.session.record_output(path)
        self._write(pd.DataFrame([(j, ix, iy) for j, (ix, iy) in enumerate(ensemble.sources.locations)],
                                 columns=["source", "ix", "iy"]), "sources.csv")
        self.session.update_metrics({'members': members, 'sigma': sigma, 'sources': len(ensemble.sources)})

    def cmd_make_truth(self):
        domain = load_domain(self.cfg)
        observations = load_observations(self.cfg, domain)
        formats.write_wind_field(domain.wind, self.out / "wind.wfld")
        formats.write_bathymetry(domain.bathy, self.out / "bathymetry.bath")
        formats.write_station_list(domain.stations, self.out / "stations.csv")
        formats.write_station_csv([observations[sid] for sid in domain.stations.ids], self.out / "observations.csv")
        for name in ("wind.wfld", "bathymetry.bath", "stations.csv", "observations.csv"):
            self.session.record_output(self.out / name)
        self.session.update_metrics({'truth_theta': self.cfg.truth_theta.as_dict(),
                                     'noise_sd': self.cfg.truth_noise_sd})

    def cmd_calibrate(self):
        domain = load_domain(self.cfg)
        observations = load_observations(self.cfg, domain)
        if self.args.scenario is not None:
            scenario = select_scenarios(build_scenarios(domain.stations, self.cfg.seed, self.cfg.mid_sizes,
                                                        large_size=self.cfg.large_size),
                                        [self.args.scenario])[0]
            calibration, validation = list(scenario.calibration), list(scenario.validation)
        else:
            calibration, validation = domain.stations.ids, []

        model = make_model(self.cfg, domain, self.out / "scratch")
        outcome = calibrate(self.args.algo, self.cfg, domain, observations, calibration, self.cfg.seed,
                            model, jobs=self.cfg.jobs, audit=self.args.audit)
        self._write(history_frame(outcome.result), "history.csv")
        self._write(archive_frame(outcome.result.archive), "archive.csv")
        if self.args.audit and outcome.audit:
            self._write(audit_frame(outcome.audit), "audit.csv")

        best = {
            'algorithm': self.args.algo,
            'seed': self.cfg.seed,
            'theta': outcome.best.genotype.as_dict(),
            'objectives': list(outcome.best.objectives),
            'evaluations': outcome.result.evaluations,
        }
        for set_name, points in (("calibration", calibration), ("validation", validation)):
            if not points:
                continue
            report = assess(outcome.best.genotype, model, domain.wind, observations, points, self.cfg.peak_quantile)
            default = assess(self.cfg.default_theta, model, domain.wind, observations, points, self.cfg.peak_quantile)
            best[set_name] = {'points': list(points), 'errors': report.pooled,
                              'improvements': report.improvements_over(default)}
        self._write_json(best, "best.json")
        self.session.update_metrics({'best_theta': best['theta'], 'objectives': best['objectives']})

    def cmd_experiment(self):
        domain = load_domain(self.cfg)
        observations = load_observations(self.cfg, domain)
        result = run_experiment(self.cfg, domain, observations, self.out)
        for name in ("runs.csv", "report.csv"):
            self.session.record_output(self.session.path(name))
        for r in result.records:
            if not r.ok:
                self.session.log_warning("RUN_FAILED",
                                         f"{r.algorithm} scenario {r.scenario} repeat {r.repeat}: {r.message}")
        self.session.update_metrics({'runs': len(result.records),
                                     'failed': sum(1 for r in result.records if not r.ok),
                                     'scenarios': len(result.scenarios)})

    def cmd_sensitivity(self):
        domain = load_domain(self.cfg)
        runs = self.args.runs or self.cfg.sensitivity_runs
        if self.args.param:
            table = run_sensitivity(self.args.param, runs, self.cfg.sensitivity_relative_sd, self.cfg.default_theta,
                                    domain.wind, domain.bathy, domain.stations, self.cfg.seed, self.cfg.bounds).table
        else:
            table = run_all_sensitivities(self.cfg.default_theta, domain.wind, domain.bathy, domain.stations,
                                          self.cfg.seed, runs, self.cfg.sensitivity_relative_sd, self.cfg.bounds)
        self._write(table, "sensitivity.csv")
        pooled = table[table["station"] == "pooled"].groupby("parameter", sort=False)["rel_rmse"].median()
        self.session.update_metrics({f"median_rel_rmse_{k}": float(v) for k, v in pooled.items()})

    def cmd_surface(self):
        domain = load_domain(self.cfg)
        observations = load_observations(self.cfg, domain)
        grid = GridSpec.linspace(self.args.x_name, self.args.y_name, self.args.nx, self.args.ny,
                                 self.cfg.bounds, self.cfg.default_theta)
        forcing = domain.wind
        if self.args.ensemble:
            forcing = generate_ensemble(domain.wind, self.cfg.noise.members, self.cfg.noise.sigma,
                                        self.cfg.noise.spacing, ensemble_seed(self.cfg.seed))
        model = make_model(self.cfg, domain, self.out / "scratch")
        surface = error_surface(model, forcing, observations, domain.stations.ids, grid,
                                self.cfg.bounds, self.cfg.jobs)
        self._write(surface.to_frame(), "surface.csv")
        theta, value = surface.minimum()
        self.session.update_metrics({'minimum_theta': theta.as_dict(), 'minimum_rmse': value})


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit status"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.log_level:
        set_log_level(args.log_level)

    try:
        return WavecalCLI(args).run()
    except CalibrationError as e:
        print(f"wavecal {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("wavecal: interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
