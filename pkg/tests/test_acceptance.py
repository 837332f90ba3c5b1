"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s`.  The perturbation
ensembles (criterion 7) dominate the runtime; everything else finishes in
seconds to a few minutes.
"""

import math
import time

import numpy as np
import pytest

from toriclab.dynamics import adiabaticity_dip
from toriclab.lattice import build_lattice
from toriclab.model import ModelParams
from toriclab.observables import peak_analysis
from toriclab.runner import (ExperimentConfig, run_dynamics, run_ensemble,
                             run_ising_control, run_sweep)
from toriclab.solver import gap_series
from toriclab.validate import validate

WILSON_COLUMNS = ("w_1x1", "w_2x1", "w_2x2", "w_3x2", "w_3x3")
PERIMETERS = (4, 6, 8, 10, 12)

ENSEMBLE_GRID = dict(tau_start=0.3, tau_stop=1.0, tau_step=0.02)
ENSEMBLE_PS = (10.0, 20.0, 30.0)


def criterion(number, description, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {number}: {description} -- {detail}", flush=True)
    assert ok, f"criterion {number} failed: {description} ({detail})"


def grid_value(table, tau, column):
    i = int(np.argmin(np.abs(table["tau"] - tau)))
    return table[column][i]


@pytest.fixture(scope="session")
def k4_sweep(tmp_path_factory):
    """Criterion 1/2/3/4/8 workhorse: full k=4 sweep at dtau=0.01 with gap."""
    config = ExperimentConfig(
        k=4, sector="winding00", tau_step=0.01, seed=0,
        observables=("energy", "entropy", "fidelity", "stop", "wilson", "mz", "gap"),
    )
    t0 = time.time()
    res = run_sweep(config, out_dir=tmp_path_factory.mktemp("k4") / "sweep")
    res.runtime = time.time() - t0
    return res


@pytest.fixture(scope="session")
def k3_sweep(tmp_path_factory):
    config = ExperimentConfig(
        k=3, sector="winding00", tau_step=0.01, seed=0,
        observables=("energy", "entropy", "fidelity", "stop", "mz", "gap"),
    )
    return run_sweep(config, out_dir=tmp_path_factory.mktemp("k3") / "sweep")


@pytest.fixture(scope="session")
def ensembles(tmp_path_factory):
    """Criterion 7 workhorse: k=3 full-space ensembles, R=20, P in {10,20,30}.

    The tau window covers the transition region; tau_c and the
    d(S_top)/dtau peak live well inside it.  The ideal reference runs on
    the identical grid so peak heights and widths are comparable.
    """
    root = tmp_path_factory.mktemp("ens")
    ideal = run_sweep(ExperimentConfig(
        k=3, sector="winding00", seed=0,
        observables=("energy", "entropy", "stop", "mz"), **ENSEMBLE_GRID),
        out_dir=root / "P0")
    results = {0.0: ideal}
    for P in ENSEMBLE_PS:
        t0 = time.time()
        results[P] = run_ensemble(ExperimentConfig(
            k=3, sector="full", P=P, realizations=20, seed=0, workers=2,
            solver_tol=1e-8, observables=("energy", "entropy", "stop", "mz"),
            **ENSEMBLE_GRID), out_dir=root / f"P{P:g}")
        print(f"  [ensembles] P={P:g} done in {time.time() - t0:.0f}s", flush=True)
    return results


def test_criterion_1_critical_point(k4_sweep):
    rep = k4_sweep.report
    tau_epp = rep["tau_c_energy"]["location"]
    tau_f = rep["tau_c_fidelity"]["location"]
    tau_stop = rep["tau_c_stop"]["location"]
    in_window = 0.68 <= tau_epp <= 0.74
    agree = abs(tau_f - tau_epp) <= 0.02 and abs(tau_stop - tau_epp) <= 0.02
    fast = k4_sweep.runtime < 30 * 60
    criterion(
        1, "k=4 critical point from E'' peak, F_dtau minimum, dS_top/dtau peak",
        in_window and agree and fast,
        f"tau_c(E'')={tau_epp:.3f}, tau_c(F)={tau_f:.3f}, "
        f"tau_c(S_top)={tau_stop:.3f}, runtime={k4_sweep.runtime:.0f}s",
    )


def test_criterion_2_stop_endpoints(k3_sweep, k4_sweep):
    vals = {}
    for label, res in (("k=3", k3_sweep), ("k=4", k4_sweep)):
        vals[label] = (grid_value(res.table, 0.0, "s_top"),
                       grid_value(res.table, 1.0, "s_top"))
    ok = all(abs(v0) <= 1e-9 and abs(v1 - 1.0) <= 1e-6
             for (v0, v1) in vals.values())
    criterion(
        2, "topological entropy endpoints S_top(0)=0, S_top(1)=1 for k=3,4",
        ok,
        ", ".join(f"{lbl}: S(0)={v0:.2e}, S(1)={v1:.9f}"
                  for lbl, (v0, v1) in vals.items()),
    )


def test_criterion_3_plaquette_entropy(k4_sweep):
    t = k4_sweep.table
    s1 = grid_value(t, 1.0, "s_block")
    tail = t["s_block"][t["tau"] >= 0.9 - 1e-12]
    ok = abs(s1 - 3.0) <= 1e-6 and tail.min() >= 2.7
    criterion(
        3, "k=4 plaquette block entropy: S_v(1)=3 bits, S_v >= 2.7 for tau >= 0.9",
        ok, f"S_v(1)={s1:.9f}, min over tau>=0.9 = {tail.min():.4f}",
    )


def test_criterion_4_wilson_loops(k4_sweep):
    t = k4_sweep.table
    at_one = [grid_value(t, 1.0, c) for c in WILSON_COLUMNS]
    exact_at_one = all(abs(v - 1.0) <= 1e-9 for v in at_one)
    at_03 = [grid_value(t, 0.3, c) for c in WILSON_COLUMNS]
    monotone = all(at_03[i] > at_03[i + 1] for i in range(len(at_03) - 1))
    sel = t["tau"] >= 0.75 - 1e-12
    rising = all(np.all(np.diff(t[c][sel]) >= -1e-9) for c in WILSON_COLUMNS)
    rises = [grid_value(t, 1.0, c) - grid_value(t, 0.8, c) for c in WILSON_COLUMNS]
    steeper = all(rises[i] < rises[i + 1] for i in range(len(rises) - 1))
    criterion(
        4, "k=4 Wilson loops: unity at tau=1, perimeter-ordered at tau=0.3, "
           "rising after tau_c (steeper for larger blocks)",
        exact_at_one and monotone and rising and steeper,
        f"W(1)-1 max={max(abs(v - 1) for v in at_one):.1e}, "
        f"W(0.3)={['%.1e' % v for v in at_03]}, rises={['%.3f' % r for r in rises]}",
    )


def test_criterion_5_adiabatic_dynamics(k3_sweep, tmp_path_factory):
    config = ExperimentConfig(kind="dynamics", k=3, sector="winding00",
                              T_list=(20.0, 40.0, 60.0), seed=0)
    traces = run_dynamics(config, out_dir=tmp_path_factory.mktemp("dyn3"))
    finals = {T: traces[(T, 0)].f_ad[-1] for T in (20.0, 40.0, 60.0)}
    increasing = finals[20.0] < finals[40.0] < finals[60.0]
    tau_c = k3_sweep.report["tau_c_energy"]["location"]
    dips = {T: adiabaticity_dip(traces[(T, 0)]) for T in (20.0, 40.0, 60.0)}
    near = all(abs(d - tau_c) <= 0.2 for d in dips.values())
    criterion(
        5, "k=3 adiabatic fidelity increases with T; dip within 0.2 of tau_c",
        increasing and near,
        f"F_ad(1)={['%.5f' % finals[T] for T in (20., 40., 60.)]}, "
        f"dips={['%.2f' % dips[T] for T in (20., 40., 60.)]}, tau_c={tau_c:.3f}",
    )


def test_criterion_6_leakage(tmp_path_factory):
    ideal = run_dynamics(
        ExperimentConfig(kind="dynamics", k=2, sector="full",
                         T_list=(20.0, 40.0, 60.0), seed=0),
        out_dir=tmp_path_factory.mktemp("dyn2i"))
    ideal_leak = max(max(tr.leakage[key].max() for key in tr.leakage)
                     for tr in ideal.values())
    perturbed = run_dynamics(
        ExperimentConfig(kind="dynamics", k=2, sector="full", P=1.0,
                         realizations=10, T_list=(20.0, 40.0, 60.0), seed=0),
        out_dir=tmp_path_factory.mktemp("dyn2p"))
    pert_leak = max(max(tr.leakage[key].max() for key in tr.leakage)
                    for tr in perturbed.values())
    criterion(
        6, "k=2 leakage: perturbed (P=1, R=10) < 1e-2; unperturbed < 1e-12",
        pert_leak < 1e-2 and ideal_leak < 1e-12,
        f"max perturbed leakage={pert_leak:.2e}, max ideal leakage={ideal_leak:.2e}",
    )


def test_criterion_7_perturbation_robustness(ensembles):
    peaks = {P: res.report.get("tau_c_stop") for P, res in ensembles.items()}
    ok_peaks = all(pk is not None for pk in peaks.values())
    tau0 = peaks[0.0]["location"]
    tau10 = peaks[10.0]["location"]
    shift_ok = abs(tau10 - tau0) <= 0.03
    h0 = peaks[0.0]["height"]
    heights_ok = all(peaks[P]["height"] > 0.5 * h0 for P in (10.0, 20.0))
    fwhm = {P: peaks[P]["fwhm"] for P in (0.0,) + ENSEMBLE_PS}
    fwhm_ok = all(math.isfinite(v) for v in fwhm.values())
    print("  [criterion 7] FWHM vs P: " +
          ", ".join(f"P={P:g}: {v:.3f}" for P, v in sorted(fwhm.items())), flush=True)
    criterion(
        7, "k=3 ensembles (R=20): tau_c(P=10) within 0.03 of ideal; dS_top/dtau "
           "peak height > half ideal for P<=20; FWHM reported up to P=30",
        ok_peaks and shift_ok and heights_ok and fwhm_ok,
        f"tau_c(0)={tau0:.3f}, tau_c(10)={tau10:.3f}, "
        f"heights={[round(peaks[P]['height'], 2) for P in (0.,) + ENSEMBLE_PS]}",
    )


def test_criterion_8_gap_scaling(k3_sweep, k4_sweep):
    lat2 = build_lattice(2)
    taus = np.round(np.arange(0.0, 1.0001, 0.01), 10)
    series2 = gap_series(lat2, "winding00", taus, ModelParams())
    mins = {
        8: series2.min_gap,
        18: float(np.nanmin(k3_sweep.table["gap"])),
        32: float(np.nanmin(k4_sweep.table["gap"])),
    }
    decreasing = mins[8] > mins[18] > mins[32]
    scaled = [mins[n] * math.sqrt(n) for n in (8, 18, 32)]
    within2 = max(scaled) / min(scaled) <= 2.0
    criterion(
        8, "minimum gap decreases with n, consistent with 1/sqrt(n) within 2x",
        decreasing and within2,
        f"gap_min={[round(mins[n], 4) for n in (8, 18, 32)]}, "
        f"gap_min*sqrt(n)={[round(s, 3) for s in scaled]}",
    )


def test_criterion_9_ising_control(tmp_path_factory):
    config = ExperimentConfig(kind="ising-control", ising_L=4, tau_step=0.01, seed=0)
    res = run_ising_control(config, out_dir=tmp_path_factory.mktemp("ising"))
    max_stop = res.report["max_abs_s_top"]
    taus = res.table["tau"]
    pk = peak_analysis(taus, np.abs(res.derived["d1_s_block"]))
    interior = taus[1] < pk.location < taus[-2]
    criterion(
        9, "L=4 transverse-field Ising control: |S_top| < 0.2 while |dS_v/dtau| peaks",
        max_stop < 0.2 and interior,
        f"max |S_top|={max_stop:.4f}, block-entropy peak at tau={pk.location:.3f}",
    )


def test_criterion_10_validation_suite(tmp_path_factory):
    t0 = time.time()
    report = validate(out_dir=tmp_path_factory.mktemp("validate"))
    elapsed = time.time() - t0
    print(report.table(), flush=True)
    criterion(
        10, "oracle/property suite passes in under 5 minutes",
        report.all_passed and elapsed < 300,
        f"{sum(c.passed for c in report.checks)}/{len(report.checks)} checks, "
        f"{elapsed:.0f}s",
    )
