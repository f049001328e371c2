"""Experiment orchestration: parameter selection, sweeps and timing tables."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lasso_path
from threadpoolctl import threadpool_limits

from .analysis import compute_metrics
from .model import SaturatedDataset
from .prox import Penalty, PenaltyKind
from .solver import SolverConfig, SolverDivergence, solve_lasso, solve_m1bitcsl
from .synth import STREAM_FOLDS, ExperimentSpec, synthesize, trial_rng

log = logging.getLogger(__name__)

AXES = ("saturation_ratio", "m", "k")

# axis presets for the three sweeps
FIGURES = {
    "1": dict(base=dict(n=1000, m=500, k=100, noise_level=10.0),
              axis="saturation_ratio", values=[round(0.05 * i, 2) for i in range(11)]),
    "2": dict(base=dict(n=1000, k=100, noise_level=10.0, saturation_ratio=0.15),
              axis="m", values=list(range(400, 1001, 100))),
    "3": dict(base=dict(n=1000, m=500, noise_level=10.0, saturation_ratio=0.15),
              axis="k", values=list(range(20, 161, 20))),
}

TIMING_GRID = [(500, 1000), (1000, 1000), (500, 2000), (1000, 2000), (1500, 2000)]

RECORD_FIELDS = ["spec_digest", "axis", "axis_value", "trial", "method", "snr_db",
                 "angular_error", "l2_error", "nnz", "iterations", "wall_time",
                 "converged", "status", "nu"]

_KIND_OF = {"alg1-l1": PenaltyKind.L1, "alg1-l0": PenaltyKind.L0,
            "alg1-mcp": PenaltyKind.MCP, "alg1-sl1": PenaltyKind.SORTED_L1}


class CalibrationError(RuntimeError):
    """No sparsity level on the search grid met the nonzero-count target."""


def cv_grid(phi1, y1, size=20, lo=1e-4, hi=1.0):
    """Log-spaced candidate levels scaled by ``||Phi1^T y1||_inf / M1``."""
    scale = np.max(np.abs(phi1.T @ y1)) / len(y1)
    return np.geomspace(lo, hi, size) * scale


def cross_validate_nu(phi1, y1, grid, folds, rng) -> float:
    """K-fold choice of the LASSO level on the unsaturated rows.

    Each training split is fitted along the whole grid; the level with the
    lowest mean held-out squared error wins, ties going to the larger level.
    """
    grid = np.sort(np.asarray(grid, dtype=float).reshape(-1))
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("grid must be nonempty and positive")
    if folds < 2:
        raise ValueError("need at least two folds")
    phi1 = np.asarray(phi1, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    m1 = len(y1)
    if m1 < folds:
        raise ValueError(f"{m1} rows cannot be split into {folds} folds")
    if grid.size == 1:
        return float(grid[0])

    parts = np.array_split(rng.permutation(m1), folds)
    err = np.zeros(grid.size)
    for held in parts:
        train = np.setdiff1d(np.arange(m1), held)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            # descending grid as lasso_path expects; objective is
            # ||y - X w||^2 / (2 n) + alpha ||w||_1
            _, coefs, _ = lasso_path(phi1[train], y1[train], alphas=grid[::-1])
        pred = phi1[held] @ coefs[:, ::-1]
        err += np.mean((pred - y1[held, None]) ** 2, axis=0)
    err /= folds
    best = np.flatnonzero(err == err.min())
    return float(grid[best.max()])


def sl1_weights(n, k_hat, scheme="two-level", low=0.3):
    """Nonincreasing sorted-L1 weights; the last ``k_hat`` (largest
    magnitudes) get the reduced weight under the two-level scheme."""
    k_hat = int(min(max(math.ceil(k_hat), 1), n))
    if scheme == "two-level":
        return np.concatenate([np.ones(n - k_hat), np.full(k_hat, low)])
    if scheme == "linear":
        return np.linspace(1.0, low, n)
    raise ValueError(f"unknown weight scheme {scheme!r}")


def _nnz(x):
    return int(np.count_nonzero(np.abs(x) > 1e-8))


def calibrate_nonconvex_params(template: Penalty, l1_solution_nnz, dataset: SaturatedDataset,
                               config: SolverConfig, max_doublings=20):
    """Double the penalty level from ``template.nu`` until the solution has at
    most ``l1_solution_nnz`` nonzeros. Returns the penalty and its solve."""
    if l1_solution_nnz < 1:
        raise ValueError("target nonzero count must be at least 1")
    for j in range(max_doublings + 1):
        penalty = template.with_nu(template.nu * 2.0 ** j)
        result = solve_m1bitcsl(dataset, penalty, config)
        if _nnz(result.x_hat) <= l1_solution_nnz:
            return penalty, result
    raise CalibrationError(
        f"{template.kind.value}: no level up to {template.nu * 2.0 ** max_doublings:.3g} "
        f"reached {l1_solution_nnz} nonzeros")


def _record(base, method, x_bar, result, nu, status="ok"):
    row = dict(base, method=method, nu=nu, status=status)
    if result is None:
        row.update(snr_db=math.nan, angular_error=math.nan, l2_error=math.nan, nnz=-1,
                   iterations=0, wall_time=math.nan, converged=False)
        return row
    m = compute_metrics(x_bar, result.x_hat)
    row.update(snr_db=m.snr_db, angular_error=m.angular_error, l2_error=m.l2_error,
               nnz=m.nnz, iterations=result.iterations, wall_time=result.wall_time,
               converged=result.converged)
    if not result.converged and status == "ok":
        row["status"] = "max_iter"
    return row


def select_nu(spec: ExperimentSpec, dataset: SaturatedDataset, trial_index) -> float:
    grid = cv_grid(dataset.phi1, dataset.y1, spec.cv_grid_size, spec.cv_grid_lo, spec.cv_grid_hi)
    return cross_validate_nu(dataset.phi1, dataset.y1, grid, spec.cv_folds,
                             trial_rng(spec.seed, trial_index, STREAM_FOLDS))


def solve_methods(spec: ExperimentSpec, dataset: SaturatedDataset, nu):
    """Solve every method in ``spec.methods`` on one dataset.

    Yields ``(method, penalty, result_or_None, status)``. The L1 level is
    shared by the LASSO baseline and the L1 solve; the nonconvex levels are
    calibrated against the L1 nonzero count.
    """
    cfg = spec.solver
    l1_penalty = Penalty(PenaltyKind.L1, nu)
    if "lasso" in spec.methods:
        try:
            r = solve_lasso(dataset.phi1, dataset.y1, nu, cfg, kkt_tol=spec.lasso_kkt_tol)
            yield "lasso", l1_penalty, r, "ok"
        except SolverDivergence:
            yield "lasso", l1_penalty, None, "diverged"

    nonconvex = [m for m in spec.methods if m in _KIND_OF and m != "alg1-l1"]
    l1 = None
    if "alg1-l1" in spec.methods or nonconvex:
        try:
            l1 = solve_m1bitcsl(dataset, l1_penalty, cfg)
            status = "ok"
        except SolverDivergence:
            status = "diverged"
        if "alg1-l1" in spec.methods:
            yield "alg1-l1", l1_penalty, l1, status

    for method in nonconvex:
        if l1 is None:
            yield method, None, None, "no-l1-reference"
            continue
        k_hat = max(_nnz(l1.x_hat), 1)
        kind = _KIND_OF[method]
        template = Penalty(kind, nu,
                           mcp_b=spec.mcp_b if kind is PenaltyKind.MCP else None,
                           weights=(sl1_weights(dataset.n, k_hat, spec.sl1_scheme, spec.sl1_low_weight)
                                    if kind is PenaltyKind.SORTED_L1 else None))
        try:
            penalty, r = calibrate_nonconvex_params(template, k_hat, dataset, cfg)
            yield method, penalty, r, "ok"
        except SolverDivergence:
            yield method, None, None, "diverged"
        except CalibrationError:
            yield method, None, None, "calibration-failed"


def run_trial(spec: ExperimentSpec, trial_index, axis="", axis_value=math.nan):
    truth, dataset = synthesize(spec, trial_index)
    nu = select_nu(spec, dataset, trial_index)
    base = dict(spec_digest=spec.digest(), axis=axis, axis_value=axis_value, trial=trial_index)
    return [_record(base, method, truth.x_bar, r, math.nan if pen is None else pen.nu, status)
            for method, pen, r, status in solve_methods(spec, dataset, nu)]


def _axis_spec(spec, axis, value):
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    return spec.replace(**{axis: int(value) if axis in ("m", "k") else float(value)})


def _run_cell(args):
    spec, axis, value, trial = args
    return run_trial(_axis_spec(spec, axis, value), trial, axis, value)


@dataclass
class SweepResult:
    axis_name: str
    axis_values: list
    trials: int
    spec_digest: str
    methods: tuple
    records: list = field(repr=False)

    def summary(self):
        """Per (axis value, method) mean and standard deviation of the metrics."""
        rows = []
        for v in self.axis_values:
            for method in self.methods:
                cell = [r for r in self.records if r["axis_value"] == v and r["method"] == method]
                row = dict(axis=self.axis_name, axis_value=v, method=method, trials=len(cell),
                           failed=sum(r["status"] not in ("ok", "max_iter") for r in cell))
                for key in ("snr_db", "angular_error", "wall_time"):
                    vals = np.array([r[key] for r in cell], dtype=float)
                    ok = vals[np.isfinite(vals)]
                    row[f"{key}_mean"] = float(ok.mean()) if ok.size else math.nan
                    row[f"{key}_std"] = float(ok.std()) if ok.size else math.nan
                rows.append(row)
        return rows

    def write_csv(self, records_path, summary_path=None):
        _write_rows(records_path, RECORD_FIELDS, self.records)
        if summary_path is not None:
            rows = self.summary()
            _write_rows(summary_path, list(rows[0].keys()) if rows else [], rows)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])


def run_sweep(spec: ExperimentSpec, axis, values, workers=1) -> SweepResult:
    """Run ``spec.trials`` trials at every axis value.

    Trial ``t`` uses the same random sub-streams at every axis value. A
    solver failure is recorded in the row's ``status`` and does not stop
    the sweep.
    """
    values = list(values)
    for v in values:
        _axis_spec(spec, axis, v)  # validates every point before any work
    tasks = [(spec, axis, v, t) for v in values for t in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = []
        for task in tasks:
            chunks.append(_run_cell(task))
            log.info("axis %s=%s trial %d done", axis, task[2], task[3])
    records = [row for chunk in chunks for row in chunk]
    return SweepResult(axis_name=axis, axis_values=values, trials=spec.trials,
                       spec_digest=spec.digest(), methods=spec.methods, records=records)


def figure_spec(figure, spec: ExperimentSpec | None = None):
    """Base spec, axis and axis values for one of the preset sweeps."""
    preset = FIGURES[str(figure)]
    spec = (spec or ExperimentSpec()).replace(**preset["base"])
    return spec, preset["axis"], list(preset["values"])


def _median_solve_time(method, penalty, dataset, spec, repeats):
    times = []
    for _ in range(repeats):
        if method == "lasso":
            r = solve_lasso(dataset.phi1, dataset.y1, penalty.nu, spec.solver,
                            kkt_tol=spec.lasso_kkt_tol)
        else:
            r = solve_m1bitcsl(dataset, penalty, spec.solver)
        times.append(r.wall_time)
    return float(np.median(times))


def run_timing(spec: ExperimentSpec, grid=TIMING_GRID, repeats=3):
    """Mean solve time per method for each ``(m, n)`` cell.

    Data generation, cross-validation and calibration are excluded; each
    timed solve is the median of ``repeats`` runs. BLAS is pinned to one
    thread for the duration.
    """
    rows = []
    with threadpool_limits(limits=1):
        for m, n in grid:
            cell = spec.replace(m=int(m), n=int(n))
            times = {method: [] for method in cell.methods}
            for t in range(cell.trials):
                _, dataset = synthesize(cell, t)
                nu = select_nu(cell, dataset, t)
                for method, penalty, r, _ in solve_methods(cell, dataset, nu):
                    if r is None:
                        continue
                    times[method].append(_median_solve_time(method, penalty, dataset, cell, repeats))
            for method, ts in times.items():
                rows.append(dict(m=m, n=n, method=method, trials=len(ts),
                                 mean_time=float(np.mean(ts)) if ts else math.nan))
    return rows


PILOT_GAMMAS = (0.01, 0.1, 1.0)
PILOT_SEED = 999


def _apply(spec: ExperimentSpec, changes):
    changes = dict(changes)
    solver = changes.pop("solver", None)
    if solver:
        changes["solver"] = spec.solver.replace(**solver)
    return spec.replace(**changes)


def pilot_select(spec: ExperimentSpec, variants, method, trials=5, seed=PILOT_SEED):
    """Pick the variant with the best mean SNR of ``method`` on a held-out seed.

    ``variants`` is a list of change dicts for ``spec`` (a nested ``solver``
    dict patches the solver settings). Returns ``(best_changes, table)``
    where ``table`` lists ``(changes, mean_snr)`` for every variant. Ties go
    to the earlier variant.
    """
    methods = (method,) if method in ("lasso", "alg1-l1") else ("alg1-l1", method)
    table = []
    for changes in variants:
        cand = _apply(spec, changes).replace(seed=seed, trials=trials, methods=methods)
        snrs = [r["snr_db"] for t in range(trials) for r in run_trial(cand, t)
                if r["method"] == method]
        table.append((dict(changes), float(np.nanmean(snrs))))
    best = max(range(len(table)), key=lambda i: (table[i][1], -i))
    return table[best][0], table


def pilot_gamma(spec: ExperimentSpec, grid=PILOT_GAMMAS, trials=5, seed=PILOT_SEED):
    """Choose gamma from ``grid`` by mean Alg.1-L1 SNR on a held-out seed."""
    best, table = pilot_select(spec, [{"solver": {"gamma": g}} for g in grid],
                               "alg1-l1", trials, seed)
    return best["solver"]["gamma"], [(c["solver"]["gamma"], s) for c, s in table]
