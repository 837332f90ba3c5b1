"""Persistence, determinism, resume-safety, ensembles and guards."""

import json

import numpy as np
import pytest

import toriclab.runner as runner_mod
from toriclab.runner import (ExperimentConfig, load_sweep, read_table, run_dynamics,
                             run_ensemble, run_ising_control, run_sweep, sweep_header)

TINY = dict(k=2, sector="winding00", tau_step=0.25, seed=7,
            observables=("energy", "entropy", "fidelity", "mz"),
            wilson_blocks=((1, 1), (2, 1)))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(tau_step=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig(realizations=0)
    with pytest.raises(ValueError):
        ExperimentConfig(sector="winding02")
    with pytest.raises(ValueError):
        ExperimentConfig(observables=("energy", "bogus"))
    with pytest.raises(ValueError):
        ExperimentConfig(hz_mode="gauss")


def test_config_roundtrip_and_grid():
    config = ExperimentConfig(k=3, P=2.5, observables=("energy",), seed=11)
    assert ExperimentConfig.from_dict(config.to_dict()) == config
    grid = ExperimentConfig(tau_step=0.01).tau_grid
    assert len(grid) == 101
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert np.allclose(np.diff(grid), 0.01)


def test_sweep_persists_and_reloads(tmp_path):
    config = ExperimentConfig(**TINY)
    res = run_sweep(config, out_dir=tmp_path / "run")
    assert (tmp_path / "run" / "rows.csv").exists()
    assert (tmp_path / "run" / "derived.csv").exists()
    meta = json.loads((tmp_path / "run" / "meta.json").read_text())
    assert meta["complete"] is True
    assert meta["config"]["k"] == 2
    assert meta["backend"] in ("cython", "python")
    assert not (tmp_path / "run" / "checkpoint.npz").exists()
    again = load_sweep(tmp_path / "run")
    for key in res.table:
        np.testing.assert_array_equal(res.table[key], again.table[key],
                                      err_msg=key)
    # rerunning a complete sweep is a no-op returning the stored rows
    rerun = run_sweep(config, out_dir=tmp_path / "run")
    np.testing.assert_array_equal(rerun.table["energy"], res.table["energy"])


def test_byte_determinism(tmp_path):
    config = ExperimentConfig(**TINY)
    run_sweep(config, out_dir=tmp_path / "a")
    run_sweep(config, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "rows.csv").read_bytes() == \
        (tmp_path / "b" / "rows.csv").read_bytes()
    assert (tmp_path / "a" / "derived.csv").read_bytes() == \
        (tmp_path / "b" / "derived.csv").read_bytes()


def test_resume_reproduces_uninterrupted(tmp_path, monkeypatch):
    config = ExperimentConfig(**TINY)
    run_sweep(config, out_dir=tmp_path / "ref")

    original = runner_mod._SweepEngine.measure
    calls = {"n": 0}

    def crashing(self, *args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 2:
            raise KeyboardInterrupt("simulated crash")
        return original(self, *args, **kwargs)

    monkeypatch.setattr(runner_mod._SweepEngine, "measure", crashing)
    with pytest.raises(KeyboardInterrupt):
        run_sweep(config, out_dir=tmp_path / "resumed")
    monkeypatch.setattr(runner_mod._SweepEngine, "measure", original)

    partial = (tmp_path / "resumed" / "rows.csv").read_text().splitlines()
    assert len(partial) == 3  # header + 2 completed rows
    assert (tmp_path / "resumed" / "checkpoint.npz").exists()

    run_sweep(config, out_dir=tmp_path / "resumed")
    assert (tmp_path / "resumed" / "rows.csv").read_bytes() == \
        (tmp_path / "ref" / "rows.csv").read_bytes()


def test_header_matches_rows(tmp_path):
    config = ExperimentConfig(**TINY)
    run_sweep(config, out_dir=tmp_path / "run")
    table = read_table(tmp_path / "run" / "rows.csv")
    assert list(table) == sweep_header(config)
    assert len(table["tau"]) == 5


def test_ensemble_p0_equals_sweep(tmp_path):
    config = ExperimentConfig(k=2, sector="full", P=0.0, realizations=3,
                              tau_step=0.25, seed=3,
                              observables=("energy", "entropy", "fidelity", "mz"))
    ens = run_ensemble(config, out_dir=tmp_path / "ens")
    sweep = run_sweep(config, out_dir=tmp_path / "sweep")
    for key in ("energy", "s_block", "m_z"):
        np.testing.assert_array_equal(ens.mean[key], sweep.table[key])
        np.testing.assert_array_equal(ens.std[key], np.zeros_like(ens.std[key]))


def test_ensemble_statistics(tmp_path):
    config = ExperimentConfig(k=2, sector="full", P=1.0, realizations=2,
                              tau_step=0.5, seed=3,
                              observables=("energy", "mz"))
    ens = run_ensemble(config, out_dir=tmp_path / "ens")
    t0 = read_table(tmp_path / "ens" / "real_000" / "rows.csv")
    t1 = read_table(tmp_path / "ens" / "real_001" / "rows.csv")
    # different realizations saw different fields
    assert not np.array_equal(t0["energy"], t1["energy"])
    np.testing.assert_allclose(ens.mean["energy"],
                               (t0["energy"] + t1["energy"]) / 2, atol=1e-12)
    expected_std = np.abs(t0["energy"] - t1["energy"]) / 2
    np.testing.assert_allclose(ens.std["energy"], expected_std, atol=1e-12)
    meta = json.loads((tmp_path / "ens" / "meta.json").read_text())
    assert meta["realizations"] == 2


def test_ensemble_workers_match_serial(tmp_path):
    config = ExperimentConfig(k=2, sector="full", P=2.0, realizations=2,
                              tau_step=0.5, seed=9, observables=("energy",))
    serial = run_ensemble(config, out_dir=tmp_path / "serial")
    from dataclasses import replace

    parallel = run_ensemble(replace(config, workers=2), out_dir=tmp_path / "par")
    np.testing.assert_array_equal(serial.mean["energy"], parallel.mean["energy"])


def test_perturbed_sweep_needs_full_sector():
    config = ExperimentConfig(k=2, sector="winding00", P=1.0)
    with pytest.raises(ValueError):
        run_sweep(config)


def test_dynamics_guards_and_output(tmp_path):
    with pytest.raises(ValueError):
        run_dynamics(ExperimentConfig(kind="dynamics", k=3, sector="full", P=1.0))
    with pytest.raises(ValueError):
        run_dynamics(ExperimentConfig(kind="dynamics", k=2, sector="winding00", P=1.0))
    config = ExperimentConfig(kind="dynamics", k=2, sector="winding00",
                              T_list=(3.0,), tau_step=0.25)
    traces = run_dynamics(config, out_dir=tmp_path)
    assert (3.0, 0) in traces
    table = read_table(tmp_path / "trace_T3_r000.csv")
    assert list(table) == ["tau", "F_ad", "leak_01", "leak_10", "leak_11", "norm_drift"]
    meta = json.loads((tmp_path / "trace_T3_r000.json").read_text())
    assert meta["T"] == 3.0 and "dip_tau" in meta


def test_dynamics_perturbed_realizations(tmp_path):
    config = ExperimentConfig(kind="dynamics", k=2, sector="full", P=1.0,
                              realizations=2, T_list=(2.0,), tau_step=0.5, seed=5)
    traces = run_dynamics(config, out_dir=tmp_path)
    assert set(traces) == {(2.0, 0), (2.0, 1)}
    meta0 = json.loads((tmp_path / "trace_T2_r000.json").read_text())
    meta1 = json.loads((tmp_path / "trace_T2_r001.json").read_text())
    assert meta0["field"]["hx"] != meta1["field"]["hx"]


def test_ising_control_coarse(tmp_path):
    config = ExperimentConfig(kind="ising-control", ising_L=4, tau_step=0.25)
    res = run_ising_control(config, out_dir=tmp_path)
    assert res.table["s_block"][0] == pytest.approx(0.0, abs=1e-6)
    assert res.table["s_top"][0] == pytest.approx(0.0, abs=1e-6)
    assert np.abs(res.table["s_top"]).max() < 0.25
    assert "max_abs_s_top" in res.report
    table = read_table(tmp_path / "rows.csv")
    assert len(table["tau"]) == 5


def test_solver_failure_recorded_not_fatal(tmp_path, monkeypatch):
    from toriclab.solver import SolverError

    original = runner_mod._SweepEngine.solve
    def flaky(self, tau, seed, prev, seed_extrap=None):
        if abs(tau - 0.5) < 1e-9:
            raise SolverError("synthetic failure", best_residual=1.0)
        return original(self, tau, seed, prev, seed_extrap=seed_extrap)

    monkeypatch.setattr(runner_mod._SweepEngine, "solve", flaky)
    config = ExperimentConfig(**TINY)
    res = run_sweep(config, out_dir=tmp_path / "flaky")
    assert np.isnan(res.table["energy"][2])  # tau = 0.5 row recorded as NaN
    assert np.isfinite(res.table["energy"][[0, 1, 3, 4]]).all()
    meta = json.loads((tmp_path / "flaky" / "meta.json").read_text())
    assert meta["row_errors"][0]["tau"] == 0.5


def test_two_point_stop_sweep(tmp_path):
    """tau grid {0, 1} alone reproduces the S_top endpoints exactly."""
    config = ExperimentConfig(k=3, sector="winding00", tau_step=1.0,
                              observables=("energy", "stop"))
    res = run_sweep(config, out_dir=tmp_path / "two")
    assert list(res.table["tau"]) == [0.0, 1.0]
    assert abs(res.table["s_top"][0]) < 1e-9
    assert abs(res.table["s_top"][1] - 1.0) < 1e-6
