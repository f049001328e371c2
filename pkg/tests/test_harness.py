import csv

import numpy as np
import pytest

from satcs import harness
from satcs.prox import Penalty
from satcs.solver import SolverConfig
from satcs.synth import ExperimentSpec, synthesize

SMALL = ExperimentSpec(n=120, m=80, k=6, saturation_ratio=0.2, trials=2, cv_grid_size=6)


def test_cv_grid_and_degenerate_cases():
    rng = np.random.default_rng(0)
    phi = rng.normal(size=(30, 10))
    y = phi @ rng.normal(size=10)
    grid = harness.cv_grid(phi, y, 5)
    assert np.isclose(grid[-1], np.max(np.abs(phi.T @ y)) / 30)
    assert np.isclose(grid[0] / grid[-1], 1e-4)
    assert harness.cross_validate_nu(phi, y, [0.3], 5, rng) == 0.3
    with pytest.raises(ValueError):
        harness.cross_validate_nu(phi, y, [], 5, rng)
    with pytest.raises(ValueError):
        harness.cross_validate_nu(phi[:3], y[:3], grid, 5, rng)


def test_cv_picks_a_sensible_level():
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(100, 50))
    x = np.zeros(50)
    x[:3] = [3.0, -2.0, 1.5]
    y = phi @ x + 0.1 * rng.normal(size=100)
    grid = harness.cv_grid(phi, y, 20)
    nu = harness.cross_validate_nu(phi, y, grid, 5, rng)
    # neither of the extremes of the grid
    assert grid[0] < nu < grid[-1]


def test_sl1_weights():
    w = harness.sl1_weights(6, 2)
    np.testing.assert_array_equal(w, [1, 1, 1, 1, 0.3, 0.3])
    w = harness.sl1_weights(5, 2.2, "linear", 0.5)
    np.testing.assert_allclose(w, np.linspace(1, 0.5, 5))
    with pytest.raises(ValueError):
        harness.sl1_weights(5, 1, "cubic")


def test_calibration_doubles_until_sparse_enough():
    spec = SMALL
    _, ds = synthesize(spec, 0)
    nu = harness.select_nu(spec, ds, 0)
    pen, r = harness.calibrate_nonconvex_params(Penalty("mcp", nu, mcp_b=5.0), 3, ds, spec.solver)
    assert np.count_nonzero(np.abs(r.x_hat) > 1e-8) <= 3
    assert np.log2(pen.nu / nu) == int(np.log2(pen.nu / nu))
    with pytest.raises(harness.CalibrationError):
        harness.calibrate_nonconvex_params(Penalty("l1", 1e-9), 1, ds,
                                           SolverConfig(gamma=5.0), max_doublings=0)


def test_run_trial_records():
    rows = harness.run_trial(SMALL, 0, "saturation_ratio", 0.2)
    assert [r["method"] for r in rows] == list(SMALL.methods)
    for r in rows:
        assert set(harness.RECORD_FIELDS) <= set(r)
        assert r["status"] in ("ok", "max_iter")
    lasso, l1 = rows[0], rows[1]
    assert lasso["nu"] == l1["nu"]
    nonconvex = [r for r in rows if r["method"] in ("alg1-mcp", "alg1-sl1", "alg1-l0")]
    assert all(r["nnz"] <= l1["nnz"] for r in nonconvex)


def test_sweep_csv_and_reproducibility(tmp_path):
    spec = SMALL.replace(methods=("lasso", "alg1-l1"))
    a = harness.run_sweep(spec, "saturation_ratio", [0.0, 0.2])
    b = harness.run_sweep(spec, "saturation_ratio", [0.0, 0.2], workers=2)
    key = lambda r: (r["axis_value"], r["trial"], r["method"])
    for ra, rb in zip(sorted(a.records, key=key), sorted(b.records, key=key)):
        assert ra["snr_db"] == rb["snr_db"]
    a.write_csv(tmp_path / "rec.csv", tmp_path / "sum.csv")
    with open(tmp_path / "rec.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == harness.RECORD_FIELDS
    assert len(rows) == 2 * 2 * 2
    summary = a.summary()
    assert len(summary) == 4 and all(s["trials"] == 2 for s in summary)
    with pytest.raises(ValueError):
        harness.run_sweep(spec, "noise", [1])
    with pytest.raises(ValueError):
        harness.run_sweep(spec, "saturation_ratio", [0.1, 1.0])


def test_figure_presets():
    spec, axis, values = harness.figure_spec("2")
    assert axis == "m" and values[0] == 400 and values[-1] == 1000
    assert spec.saturation_ratio == 0.15
    spec, axis, values = harness.figure_spec("1", ExperimentSpec(trials=3))
    assert spec.trials == 3 and axis == "saturation_ratio" and len(values) == 11


def test_timing_rows():
    spec = SMALL.replace(methods=("lasso", "alg1-l1"), trials=1)
    rows = harness.run_timing(spec, grid=[(60, 100)], repeats=1)
    assert {(r["m"], r["n"], r["method"]) for r in rows} == {(60, 100, "lasso"), (60, 100, "alg1-l1")}
    assert all(r["mean_time"] > 0 for r in rows)


def test_pilot_selects_best_mean():
    best, table = harness.pilot_select(SMALL, [{"solver": {"gamma": 0.0}}, {"solver": {"gamma": 0.5}}],
                                       "alg1-l1", trials=2, seed=7)
    assert len(table) == 2
    assert best == max(table, key=lambda row: row[1])[0]
    gamma, rows = harness.pilot_gamma(SMALL, grid=(0.0, 0.5), trials=2, seed=7)
    assert gamma == best["solver"]["gamma"] and [g for g, _ in rows] == [0.0, 0.5]
