"""Command-line entry point: ``satcs <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from collections import defaultdict

import numpy as np
from threadpoolctl import threadpool_limits

from . import harness
from .analysis import compute_metrics, estimate_lambda, lambda_quadrature, lemma1_vector_check
from .config import ConfigError, dump_spec, load_spec
from .model import DatasetError, load_dataset, load_ground_truth, save_dataset, save_ground_truth
from .synth import METHODS, ExperimentSpec, generate_signal, synthesize, trial_rng

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

PLOT_METRICS = ("snr_db", "angular_error", "l2_error", "wall_time")


def _spec(args) -> ExperimentSpec:
    spec = load_spec(args.config) if args.config else ExperimentSpec()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        spec = spec.replace(seed=args.seed)
    return spec


def _out(args, *parts):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, *parts)


def cmd_generate(args):
    spec = _spec(args)
    truth, dataset = synthesize(spec, args.trial)
    out = _out(args)
    save_dataset(dataset, out)
    save_ground_truth(truth, os.path.join(out, "ground_truth.csv"))
    dump_spec(spec, os.path.join(out, "spec.yaml"))
    print(f"wrote trial {args.trial}: M1={dataset.m1} M2={dataset.m2} N={dataset.n} to {out}")
    return EXIT_OK


def cmd_solve(args):
    spec = _spec(args).replace(methods=(args.method,))
    dataset = load_dataset(args.data)
    truth_path = args.truth or os.path.join(args.data, "ground_truth.csv")
    truth = load_ground_truth(truth_path) if os.path.exists(truth_path) else None
    if args.nu is not None:
        if not args.nu > 0:
            raise ConfigError("--nu must be positive")
        nu = args.nu
    else:
        nu = harness.select_nu(spec, dataset, 0)
    for method, penalty, result, status in harness.solve_methods(spec, dataset, nu):
        if result is None:
            print(f"{method}: {status}", file=sys.stderr)
            return EXIT_DIVERGED if status == "diverged" else 1
        if args.trace:
            result.write_trace(args.trace)
        print(f"method      {method}")
        print(f"nu          {penalty.nu:.6g}")
        print(f"iterations  {result.iterations}")
        print(f"converged   {result.converged}")
        print(f"wall_time   {result.wall_time:.4f}")
        if truth is not None:
            m = compute_metrics(truth.x_bar, result.x_hat)
            print(f"snr_db      {m.snr_db:.4f}")
            print(f"angular     {m.angular_error:.6f}")
            print(f"l2_error    {m.l2_error:.6f}")
            print(f"nnz         {m.nnz}")
        if args.save:
            np.savetxt(args.save, result.x_hat, fmt="%.17g")
    return EXIT_OK


def cmd_sweep(args):
    spec = _spec(args)
    if args.trials is not None:
        spec = spec.replace(trials=args.trials)
    if args.axis:
        axis = args.axis
        values = args.values
        if not values:
            raise ConfigError("--axis needs --values")
    else:
        spec, axis, values = harness.figure_spec(args.figure, spec)
        if args.values:
            values = args.values
    result = harness.run_sweep(spec, axis, values, workers=args.workers)
    records = _out(args, f"records_{axis}.csv")
    summary = _out(args, f"summary_{axis}.csv")
    result.write_csv(records, summary)
    for row in result.summary():
        print(f"{axis}={row['axis_value']:<8g} {row['method']:<9} "
              f"snr {row['snr_db_mean']:7.2f} +- {row['snr_db_std']:5.2f}  "
              f"ae {row['angular_error_mean']:.4f}  failed {row['failed']}")
    print(f"wrote {records} and {summary}")
    return EXIT_OK


def cmd_bench(args):
    spec = _spec(args)
    if args.trials is not None:
        spec = spec.replace(trials=args.trials)
    rows = harness.run_timing(spec, repeats=args.repeats)
    path = _out(args, "timing.csv")
    harness._write_rows(path, ["m", "n", "method", "trials", "mean_time"], rows)
    for r in rows:
        print(f"M={r['m']:<5} N={r['n']:<5} {r['method']:<9} {r['mean_time']:.4f} s")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_theory(args):
    spec = _spec(args)
    x_bar = generate_signal(spec.n, spec.k, trial_rng(spec.seed, 0, 0)).x_bar
    print(f"{'T':>6} {'lambda_numeric':>15} {'lambda_hat':>11} {'std_err':>10} {'max_deviation':>14}")
    for i, t in enumerate(args.thresholds):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(i, 100)))
        lam = lambda_quadrature(t, spec.flip_prob)
        lam_hat, se = estimate_lambda(t, x_bar, args.samples, rng, spec.flip_prob)
        dev = lemma1_vector_check(t, x_bar, args.samples, rng, spec.flip_prob)
        print(f"{t:6.3f} {lam:15.6f} {lam_hat:11.6f} {se:10.2e} {dev:14.3e}")
    return EXIT_OK


def cmd_plot(args):
    """Mean of each metric per axis value, one two-column file per method."""
    cells = defaultdict(list)
    axis = None
    with open(args.records, newline="") as fh:
        for row in csv.DictReader(fh):
            axis = row["axis"]
            cells[row["method"], float(row["axis_value"])].append(row)
    if axis is None:
        raise ConfigError(f"{args.records} has no records")
    written = []
    for metric in PLOT_METRICS:
        for method in sorted({m for m, _ in cells}):
            xs = sorted(v for m, v in cells if m == method)
            path = _out(args, f"{axis}_{metric}_{method}.dat")
            with open(path, "w") as fh:
                fh.write(f"# {axis} {metric}\n")
                for x in xs:
                    vals = np.array([float(r[metric]) for r in cells[method, x]])
                    vals = vals[np.isfinite(vals)]
                    fh.write(f"{x!r} {float(vals.mean()) if vals.size else math.nan!r}\n")
            written.append(path)
    print(f"wrote {len(written)} series files to {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="satcs", description=__doc__)
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="BLAS thread limit")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write one synthetic trial to disk")
    g.add_argument("--trial", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="recover one dataset with one method")
    s.add_argument("--data", required=True, help="dataset directory")
    s.add_argument("--method", choices=METHODS, default="alg1-l1")
    s.add_argument("--nu", type=float, help="sparsity level (default: cross-validated)")
    s.add_argument("--truth", help="ground truth CSV (default: <data>/ground_truth.csv)")
    s.add_argument("--trace", help="write the residual trace to this CSV")
    s.add_argument("--save", help="write the estimate to this file")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="trial sweep along one axis")
    w.add_argument("--figure", choices=sorted(harness.FIGURES), default="1")
    w.add_argument("--axis", choices=harness.AXES)
    w.add_argument("--values", type=float, nargs="+")
    w.add_argument("--trials", type=int)
    w.add_argument("--workers", type=int, default=1)
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="timing table over the (M, N) grid")
    b.add_argument("--trials", type=int)
    b.add_argument("--repeats", type=int, default=3)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("theory", help="Monte Carlo check of the lambda scaling")
    t.add_argument("--samples", type=int, default=100_000)
    t.add_argument("--thresholds", type=float, nargs="+", default=[0.0, 1.0])
    t.set_defaults(func=cmd_theory)

    pl = sub.add_parser("plot", help="records CSV to two-column series files")
    pl.add_argument("records")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
