"""Schedule integration: stationarity, convergence, symmetry and ordering."""

import math

import numpy as np
import pytest

from toriclab.dynamics import (EvolutionError, _rk4_step, _ScheduleAction,
                               adiabaticity_dip, evolve, sector_leakage)
from toriclab.lattice import loop_mask
from toriclab.model import ModelParams, sample_field


def test_frozen_hamiltonian_keeps_eigenstate(sector2):
    """With tau pinned, an eigenstate only acquires a phase."""
    sched = _ScheduleAction(ModelParams(), sector2, None)
    psi0 = np.zeros(sector2.size, dtype=np.complex128)
    psi0[sector2.index_of(0)] = 1.0  # vacuum: exact eigenstate at tau=0
    psi = psi0.copy()
    out = np.empty_like(psi)
    buf = np.empty_like(psi)
    energy = float(np.real(np.vdot(psi, sched.at(0.0)(psi, out))))

    class Frozen:
        def at(self, tau, offset=0.0):
            return sched.at(0.0, offset=offset)

    frozen = Frozen()
    for step in range(500):
        _rk4_step(frozen, psi, step * 0.01, 1.0, 0.01, out, buf, energy)
    assert abs(abs(np.vdot(psi0, psi)) - 1.0) < 1e-10
    assert abs(np.linalg.norm(psi) - 1.0) < 1e-10


def test_dt_halving_convergence(sector2):
    t1 = evolve(sector2, ModelParams(), T=3.0, record_tau_step=0.1)
    t2 = evolve(sector2, ModelParams(), T=3.0, dt=t1.dt / 2, record_tau_step=0.1)
    fid = abs(np.vdot(t1.final_state, t2.final_state))
    assert fid > 1 - 1e-8
    assert abs(t1.f_ad[-1] - t2.f_ad[-1]) < 1e-6


def test_check_dt_flag_runs(sector2):
    trace = evolve(sector2, ModelParams(), T=1.0, record_tau_step=0.25, check_dt=True)
    assert trace.f_ad.shape == (5,)


def test_unstable_dt_detected(sector2):
    with pytest.raises(EvolutionError):
        # far outside the RK4 stability region for the tension spread
        evolve(sector2, ModelParams(), T=5.0, dt=1.0, record_tau_step=0.5,
               check_dt=True)


def test_norm_drift_bounded(sector3):
    trace = evolve(sector3, ModelParams(), T=20.0)
    assert trace.norm_drift[-1] < 1e-6
    assert np.all(trace.f_ad >= 0) and np.all(trace.f_ad <= 1 + 1e-12)


def test_unperturbed_full_space_leakage_is_exact_zero(full2):
    trace = evolve(full2, ModelParams(), T=5.0, record_tau_step=0.05)
    for key in ("01", "10", "11"):
        assert trace.leakage[key].max() < 1e-12


def test_in_sector_leakage_reported_zero(sector3):
    trace = evolve(sector3, ModelParams(), T=2.0, record_tau_step=0.25)
    assert all(trace.leakage[k].max() == 0.0 for k in trace.leakage)


def test_adiabaticity_improves_with_T(sector2):
    finals = [evolve(sector2, ModelParams(), T=T).f_ad[-1] for T in (5.0, 10.0, 20.0)]
    assert finals[0] < finals[1] < finals[2]


def test_dip_location_and_flag(sector2):
    trace = evolve(sector2, ModelParams(), T=10.0)
    dip = adiabaticity_dip(trace)
    assert 0.0 < dip <= 1.0
    flat = evolve(sector2, ModelParams(), T=10.0)
    flat.f_ad[:] = 1.0
    assert math.isnan(adiabaticity_dip(flat))


def test_sector_leakage_op(lat2, full2, sector2):
    t1 = loop_mask(lat2, "t1x").sites
    vac = np.zeros(full2.size)
    vac[0] = 1.0
    psi_t = vac.astype(np.complex128)
    psi_t[t1] = 0.1
    psi_t /= np.linalg.norm(psi_t)
    leaks = sector_leakage(psi_t, full2, vac)
    assert leaks["10"] == pytest.approx(0.1 / math.sqrt(1.01), abs=1e-12)
    assert leaks["01"] == 0.0 and leaks["11"] == 0.0
    assert sector_leakage(psi_t[: sector2.size], sector2, vac[: sector2.size]) == \
        {"01": 0.0, "10": 0.0, "11": 0.0}


def test_perturbed_initial_state_is_ground_state(lat2, full2):
    fld = sample_field(lat2, P=1.0, seed=4)
    trace = evolve(full2, ModelParams(), T=1.0, fld=fld, record_tau_step=0.5)
    assert trace.f_ad[0] == pytest.approx(1.0, abs=1e-9)
    assert trace.taus[0] == 0.0 and trace.taus[-1] == 1.0


def test_energy_continuity(sector2):
    trace = evolve(sector2, ModelParams(), T=10.0)
    # no step discontinuities: dH/dtau is bounded by g*k^2 + xi*n = 12 here
    jumps = np.abs(np.diff(trace.energy))
    assert jumps.max() < 10 * 0.01 * 12 + 1e-6


def test_perturbed_trace_matches_ideal_at_p1(full2):
    """A P=1 perturbation leaves the adiabatic trace unchanged at plot scale."""
    ideal = evolve(full2, ModelParams(), T=20.0)
    fld = sample_field(full2.lattice, P=1.0, seed=11)
    pert = evolve(full2, ModelParams(), T=20.0, fld=fld)
    assert np.abs(pert.f_ad - ideal.f_ad).max() < 0.02
