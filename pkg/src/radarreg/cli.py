"""Command-line entry points.

Three subcommands wire the library into reproducible pipelines:

* ``simulate``   generate a synthetic dataset (scan pairs + truth sidecar)
* ``register``   register two scan files and print the result as JSON
* ``benchmark``  run a Monte-Carlo experiment and write report/run CSVs

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluation, scan_io
from .baseline_sa import sa_register
from .config import ConfigError, config_dict, config_hash, default_register_config, load_config
from .estimator import DegenerateProblemError, register
from .geometry import TimingInfo
from .simulation import landmarks_for_configuration, make_pair, run_monte_carlo

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _default_jobs() -> int:
    env = os.environ.get("RADARREG_JOBS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=["psr", "psr-c", "sim", "sim-c"], help="experiment preset")
    p.add_argument("--config", help="INI config file; overrides the preset values")
    p.add_argument("--scale", type=float, help="fraction of runs per configuration")
    p.add_argument("--seed", type=int, help="dataset seed override")


def cmd_simulate(args) -> int:
    sim, est = load_config(args.config, args.preset, args.scale, args.seed)
    chash = config_hash(sim, est)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    scans = []
    truths = []
    resampled = 0
    pair_serial = 0
    for ci in range(sim.num_configurations):
        landmarks = landmarks_for_configuration(sim, ci)
        for ri in range(sim.runs_per_configuration):
            base_time = pair_serial * 2.0 * sim.dt
            pair, attempts = make_pair(sim, ci, ri, landmarks=landmarks, base_time=base_time)
            resampled += attempts
            scans.append(pair.prev)
            scans.append(pair.cur)
            truths.append(
                {
                    "pair_index": pair_serial,
                    "config_index": ci,
                    "run_index": ri,
                    "truth": scan_io.state_to_dict(pair.truth),
                    "correspondence_map": [list(c) for c in pair.correspondence_map],
                    "seed": sim.seed,
                    "config_hash": chash,
                }
            )
            pair_serial += 1
    scan_io.write_scans(scans, outdir / "scans.jsonl")
    scan_io.write_truths(truths, outdir / "truth.jsonl")
    manifest = {
        "config_hash": chash,
        "seed": sim.seed,
        "experiment": sim.experiment.value,
        "n_pairs": pair_serial,
        "resampled_pairs": resampled,
        "files": {"scans": "scans.jsonl", "truth": "truth.jsonl"},
        "config": config_dict(sim, est),
    }
    scan_io.write_manifest(manifest, outdir / "manifest.json")
    print(f"wrote {pair_serial} pairs to {outdir} (config_hash={chash})")
    return EXIT_OK


def cmd_register(args) -> int:
    prev = scan_io.read_single_scan(args.prev)
    cur = scan_io.read_single_scan(args.cur)
    dt = cur.timestamp - prev.timestamp
    if args.dt is not None:
        dt = args.dt
    if dt <= 0:
        raise scan_io.ScanFormatError(
            f"non-positive time delta {dt}; scans out of order (use --dt to override)"
        )
    timing = TimingInfo(dt=dt, dt_std=args.sigma_dt)
    cfg = default_register_config(
        dof=args.dof,
        use_doppler=args.doppler,
        outlier_weight=args.outlier_weight,
        fov_half_angle=math.radians(args.fov_half_angle_deg),
    )
    t0 = time.perf_counter()
    if args.method == "sa":
        state = sa_register(prev, cur, cfg, timing)
    else:
        state = register(prev, cur, cfg, timing)
    runtime_ms = (time.perf_counter() - t0) * 1e3
    out = {
        "method": args.method + ("-d" if args.doppler else ""),
        "transform": {
            "dof": int(state.dof),
            "translation": [float(v) for v in state.translation],
            "rotation": state.rotation,
        },
        "covariance": None
        if state.covariance is None
        else [[float(v) for v in row] for row in state.covariance],
        "iterations": state.iterations,
        "converged": state.converged,
        "cost": state.cost,
        "runtime_ms": runtime_ms,
    }
    json.dump(out, sys.stdout, indent=2)
    print()
    return EXIT_OK if state.converged else EXIT_NUMERIC


def cmd_benchmark(args) -> int:
    sim, est = load_config(args.config, args.preset, args.scale, args.seed)
    chash = config_hash(sim, est)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if not methods:
        raise ConfigError("no methods given")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    results = run_monte_carlo(sim, methods, est, jobs=args.jobs)
    dataset = sim.experiment.value
    reports = evaluation.build_report(results, dataset)
    include_runtime = not args.no_runtime
    evaluation.write_report_csv(
        reports, outdir / "report.csv", chash, include_runtime=include_runtime
    )
    evaluation.write_runs_csv(
        results, dataset, outdir / "runs.csv", chash, include_runtime=include_runtime
    )
    for rep in reports:
        print(
            f"{rep.method:6s} {dataset:6s} rmse={rep.rmse_translation:.4f} m "
            f"/ {rep.rmse_rotation_deg:.3f} deg  anees={rep.anees:.3f} "
            f"chi2_pass={rep.chi2_pass}  iters={rep.avg_iterations:.1f} "
            f"runs={rep.n_runs} failures={rep.failures}"
        )
    print(f"report: {outdir / 'report.csv'} (config_hash={chash})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarreg",
        description="Probabilistic radar scan registration and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_config_args(p_sim)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_reg = sub.add_parser("register", help="register two scan files")
    p_reg.add_argument("prev", help="model scan file (one JSON line)")
    p_reg.add_argument("cur", help="current scan file (one JSON line)")
    p_reg.add_argument("--method", choices=["msm", "sa"], default="msm")
    p_reg.add_argument("--doppler", action="store_true", help="use Doppler measurements")
    p_reg.add_argument("--dof", type=int, choices=[2, 3], default=2)
    p_reg.add_argument("--dt", type=float, help="override the scan time delta [s]")
    p_reg.add_argument(
        "--sigma-dt", type=float, default=0.005, help="time-delta uncertainty [s] (default 5 ms)"
    )
    p_reg.add_argument(
        "--outlier-weight", type=float, default=0.25, help="expected outlier mass (0 disables)"
    )
    p_reg.add_argument(
        "--fov-half-angle-deg",
        type=float,
        default=55.0,
        help="sensor FoV half-angle, sets the outlier model's lateral spread",
    )
    p_reg.set_defaults(func=cmd_register)

    p_bench = sub.add_parser("benchmark", help="run a Monte-Carlo experiment")
    _add_config_args(p_bench)
    p_bench.add_argument(
        "--methods", default="msm", help="comma-separated subset of msm,sa,msm-d,sa-d"
    )
    p_bench.add_argument("--out", required=True, help="output directory for the CSVs")
    p_bench.add_argument(
        "--jobs", type=int, default=_default_jobs(), help="worker processes (RADARREG_JOBS)"
    )
    p_bench.add_argument(
        "--no-runtime",
        action="store_true",
        help="zero the wall-clock runtime columns for byte-reproducible output",
    )
    p_bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (scan_io.ScanFormatError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateProblemError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
