"""Command-line interface.

Subcommands:
  simulate static|scaling|ac   run a campaign from a config file
  analyze                      stability analysis of a measured series CSV
  limits                       closed-form SQL / reciprocal-space limits
  calibrate                    solve the centering jitter for a noise target

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .constants import RB87_MASS
from .metrology import (PhysicalConstants, allan_deviation, histogram_stability,
                        load_series_csv, normality_diagnostic, ql_reciprocal,
                        ql_reciprocal_sensitivity, sensitivity_from_adev,
                        sql_real, sql_real_sensitivity)
from .campaign import (CalibrationError, ConfigError, calibrate_jitter,
                       load_config, run_ac_campaign, run_scaling_campaign,
                       run_static_campaign, write_report)
from .campaign.report import _adev_csv
from .campaign.runner import ComponentAnalysis, _octave_multiples, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="becforce",
        description="BEC optical-lattice force-sensor digital twin")
    sub = top.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulated campaign")
    sim.add_argument("mode", choices=["static", "scaling", "ac"])
    sim.add_argument("--config", required=True, help="campaign config file")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    sim.add_argument("--out", required=True, help="report output directory")
    sim.add_argument("--workers", type=int, default=None,
                     help="override the config worker count")

    ana = sub.add_parser("analyze", help="analyze a measurement series CSV")
    ana.add_argument("--series", required=True,
                     help="CSV with header start_time_s,component,force_n")
    ana.add_argument("--tau0", type=float, required=True,
                     help="single-point cycle time in seconds")
    ana.add_argument("--out", default=".", help="output directory")

    lim = sub.add_parser("limits", help="quantum limit calculators")
    lim.add_argument("--mass-kg", type=float, default=RB87_MASS)
    lim.add_argument("--dt-s", type=float, required=True)
    lim.add_argument("--n0", type=float, default=None)
    lim.add_argument("--lq-m", type=float, default=None)
    lim.add_argument("--cycle-time-s", type=float, default=76.0)

    cal = sub.add_parser("calibrate",
                         help="solve centering jitter for a per-pair force noise")
    cal.add_argument("--target-sigma-n", type=float, required=True)
    cal.add_argument("--config", required=True)
    cal.add_argument("--pairs", type=int, default=400,
                     help="Monte Carlo pairs per probe")
    return top


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    runner = {"static": run_static_campaign, "scaling": run_scaling_campaign,
              "ac": run_ac_campaign}[args.mode]
    record = runner(cfg)
    written = write_report(record, args.out)
    record.save(Path(args.out) / "run_record.json")
    written.append(Path(args.out) / "run_record.json")
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_analyze(args) -> int:
    try:
        series_by_comp = load_series_csv(args.series, cycle_time=args.tau0)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not series_by_comp:
        raise ConfigError(f"no measurement rows in {args.series}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"schema_version": 1, "tau0_s": args.tau0, "components": {}}
    for comp, series in sorted(series_by_comp.items()):
        taus = np.array(_octave_multiples(len(series)), dtype=float) * args.tau0
        adev = allan_deviation(series, taus)
        hist = histogram_stability(series, _octave_multiples(len(series)))
        sens = sensitivity_from_adev(adev, args.tau0)
        entry = {
            "n": len(series),
            "mean_n": float(np.mean(series.values)),
            "std_n": float(np.std(series.values, ddof=1)),
            "sensitivity_n_per_rthz": sens,
            "adev_floor_n": float(adev.adev.min()),
        }
        if len(series) >= 50:
            norm = normality_diagnostic(series)
            entry["normality"] = {"statistic": norm.statistic,
                                  "passed": norm.passed,
                                  "skewness": norm.skewness,
                                  "excess_kurtosis": norm.excess_kurtosis}
        analysis = ComponentAnalysis(label=comp, adev=adev, histogram=hist,
                                     normality=None, sensitivity=sens,
                                     acting_sensitivity=sens)
        _adev_csv(out / f"adev_{comp}.csv", analysis)
        summary["components"][comp] = entry
        print(f"{comp}: n={entry['n']} mean={entry['mean_n']:.4e} N "
              f"S={sens:.4e} N/sqrt(Hz) adev_floor={entry['adev_floor_n']:.4e} N")
    write_json(summary, out / "analysis.json")
    print(out / "analysis.json")
    return EXIT_OK


def _cmd_limits(args) -> int:
    consts = PhysicalConstants(mass=args.mass_kg)
    payload = {
        "mass_kg": args.mass_kg,
        "dt_s": args.dt_s,
        "sql_force_n": sql_real(consts, args.dt_s),
        "sql_sensitivity_n_per_rthz": sql_real_sensitivity(consts, args.dt_s),
    }
    if (args.n0 is None) != (args.lq_m is None):
        raise ConfigError("--n0 and --lq-m must be given together")
    if args.n0 is not None:
        payload.update({
            "n0": args.n0,
            "lq_m": args.lq_m,
            "cycle_time_s": args.cycle_time_s,
            "ql_force_n": ql_reciprocal(consts, args.n0, args.dt_s, args.lq_m),
            "ql_sensitivity_n_per_rthz": ql_reciprocal_sensitivity(
                consts, args.n0, args.dt_s, args.lq_m, args.cycle_time_s),
        })
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    jitter, achieved = calibrate_jitter(cfg, args.target_sigma_n,
                                        n_pairs=args.pairs)
    print(json.dumps({"centering_jitter_k_inv_m": jitter,
                      "achieved_sigma_n": achieved,
                      "target_sigma_n": args.target_sigma_n},
                     indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = {"simulate": _cmd_simulate, "analyze": _cmd_analyze,
               "limits": _cmd_limits, "calibrate": _cmd_calibrate}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationError, ValueError, RuntimeError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
