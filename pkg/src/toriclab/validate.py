"""Built-in oracle and property suite (the `validate` experiment).

Every check pits an implementation against an independent route: dense
LAPACK spectra against sector Lanczos, brute-force partial traces against
the bucketed reduction, analytic endpoint energies against the solver,
symmetry identities against the matrix-free application, and byte-level
determinism of persisted sweeps.
"""

from __future__ import annotations

import json
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import enumerate_sector
from .dynamics import evolve
from .lattice import Region, build_lattice, loop_mask, plaq_mask, star_mask
from .model import ModelParams, h0_action, perturbed_action, sample_field
from .observables import (calibrate_ring, entanglement_entropy,
                          exact_toric_ground_state, reduced_density_matrix,
                          topological_entropy)
from .runner import ExperimentConfig, run_sweep
from .solver import dense_symmetric_eig, lanczos_lowest


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        lines = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"[{mark}] {c.name}: {c.detail}")
        lines.append(f"-- {sum(c.passed for c in self.checks)}/{len(self.checks)} checks passed")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed,
                "checks": [c.__dict__ for c in self.checks]}


def dense_matrix(action, dim: int) -> np.ndarray:
    """Materialize a matrix-free operator column by column."""
    mat = np.empty((dim, dim))
    e = np.zeros(dim)
    for j in range(dim):
        e[j] = 1.0
        mat[:, j] = action(e)
        e[j] = 0.0
    return mat


def brute_force_rdm(psi_full: np.ndarray, n: int, region_sites: list[int]) -> np.ndarray:
    """Partial trace by axis permutation of the full 2^n tensor."""
    region_sites = sorted(region_sites)
    comp = [s for s in range(n) if s not in region_sites]
    tensor = psi_full.reshape([2] * n)
    # site j lives on axis n-1-j; subsystem bit order must match the bucketed
    # reduction (ascending sites -> low bits first)
    axes = [n - 1 - s for s in reversed(region_sites)] + \
           [n - 1 - s for s in reversed(comp)]
    m = len(region_sites)
    a = np.transpose(tensor, axes).reshape(1 << m, 1 << (n - m))
    return a @ a.conj().T


def _check_masks(k: int) -> Check:
    lat = build_lattice(k)
    issues = []
    stars = [star_mask(lat, s).sites for s in range(lat.n_faces)]
    plaqs = [plaq_mask(lat, p).sites for p in range(lat.n_faces)]
    if any(m.bit_count() != 4 for m in stars + plaqs):
        issues.append("mask weight != 4")
    cover_s = cover_p = 0
    for j in range(lat.n):
        cover_s += sum((m >> j) & 1 for m in stars) != 2
        cover_p += sum((m >> j) & 1 for m in plaqs) != 2
    if cover_s or cover_p:
        issues.append("site not in exactly 2 stars / 2 plaquettes")
    xs = xp = 0
    for m in stars:
        xs ^= m
    for m in plaqs:
        xp ^= m
    if xs or xp:
        issues.append("XOR of all masks nonzero")
    if any((s & p).bit_count() % 2 for s in stars for p in plaqs):
        issues.append("star/plaquette overlap odd")
    t1 = loop_mask(lat, "t1x").sites
    z1 = loop_mask(lat, "z-cut-1").sites
    z2 = loop_mask(lat, "z-cut-2").sites
    if (t1 & z1).bit_count() % 2 != 1 or (t1 & z2).bit_count() % 2 != 0:
        issues.append("t1x winding overlaps wrong")
    if any((p & z1).bit_count() % 2 or (p & z2).bit_count() % 2 for p in plaqs):
        issues.append("plaquette/z-cut overlap odd")
    return Check(f"mask invariants k={k}", not issues, "; ".join(issues) or "all hold")


def _check_dense_vs_lanczos() -> Check:
    lat = build_lattice(2)
    full = enumerate_sector(lat, "full")
    sector = enumerate_sector(lat, "winding00")
    worst = 0.0
    for tau in np.linspace(0.0, 1.0, 11):
        params = ModelParams(tau=float(tau))
        w, _ = dense_symmetric_eig(dense_matrix(h0_action(params, full), full.size),
                                   want_vectors=False)
        res = lanczos_lowest(h0_action(params, sector), sector.size)
        worst = max(worst, abs(w[0] - res.energies[0]))
    return Check("k=2 dense vs sector Lanczos (11 tau)", worst < 1e-10,
                 f"max |E0 difference| = {worst:.2e}")


def _check_dense_vs_lanczos_perturbed() -> Check:
    lat = build_lattice(2)
    full = enumerate_sector(lat, "full")
    fld = sample_field(lat, P=1.0, seed=12345)
    params = ModelParams(tau=0.6)
    act = perturbed_action(params, fld, full)
    w, _ = dense_symmetric_eig(dense_matrix(act, full.size), want_vectors=False)
    res = lanczos_lowest(act, full.size)
    diff = abs(w[0] - res.energies[0])
    return Check("k=2 perturbed dense vs Lanczos", diff < 1e-10,
                 f"|E0 difference| = {diff:.2e}")


def _check_partial_trace() -> Check:
    lat = build_lattice(2)
    sector = enumerate_sector(lat, "winding00")
    rng = np.random.Generator(np.random.PCG64(99))
    psi = rng.standard_normal(sector.size)
    psi /= np.linalg.norm(psi)
    region = Region((1 << 0) | (1 << 3) | (1 << 6), "custom")
    rho = reduced_density_matrix(psi, sector, region).matrix
    rho_bf = brute_force_rdm(sector.embed(psi), lat.n, region.site_list())
    diff = float(np.abs(rho - rho_bf).max())
    return Check("partial-trace oracle (k=2, 3 sites)", diff < 1e-10,
                 f"max |rho difference| = {diff:.2e}")


def _check_hermiticity() -> Check:
    lat = build_lattice(2)
    full = enumerate_sector(lat, "full")
    fld = sample_field(lat, P=2.0, hz_mode="uniform02", seed=7)
    act = perturbed_action(ModelParams(tau=0.4), fld, full)
    rng = np.random.Generator(np.random.PCG64(11))
    worst = 0.0
    for _ in range(5):
        a = rng.standard_normal(full.size) + 1j * rng.standard_normal(full.size)
        b = rng.standard_normal(full.size) + 1j * rng.standard_normal(full.size)
        worst = max(worst, abs(np.vdot(a, act(b)) - np.conj(np.vdot(b, act(a)))))
    return Check("hermiticity <a|Hb> = conj(<b|Ha>)", worst < 1e-12 * full.size,
                 f"max deviation = {worst:.2e}")


def _check_purity_symmetry() -> Check:
    lat = build_lattice(2)
    sector = enumerate_sector(lat, "winding00")
    rng = np.random.Generator(np.random.PCG64(5))
    psi = rng.standard_normal(sector.size)
    psi /= np.linalg.norm(psi)
    sites = [0, 2, 5]
    region = Region(sum(1 << s for s in sites), "custom")
    comp = Region(sum(1 << s for s in range(lat.n) if s not in sites), "custom")
    s1 = entanglement_entropy(psi, sector, region)
    s2 = entanglement_entropy(psi, sector, comp)
    return Check("purity symmetry S_A = S_Ac", abs(s1 - s2) < 1e-10,
                 f"|S_A - S_Ac| = {abs(s1 - s2):.2e}")


def _check_winding_preservation() -> Check:
    lat = build_lattice(2)
    full = enumerate_sector(lat, "full")
    sector = enumerate_sector(lat, "winding00")
    rng = np.random.Generator(np.random.PCG64(17))
    psi = rng.standard_normal(sector.size)
    psi /= np.linalg.norm(psi)
    hpsi = h0_action(ModelParams(tau=0.5), full)(sector.embed(psi))
    outside = hpsi.copy()
    outside[sector.configs.astype(np.int64)] = 0.0
    leak = float(np.abs(outside).max())
    return Check("H0 preserves winding sector", leak == 0.0,
                 f"max amplitude outside sector = {leak:.2e}")


def _check_rk4_convergence() -> Check:
    lat = build_lattice(2)
    sector = enumerate_sector(lat, "winding00")
    t1 = evolve(sector, ModelParams(), T=5.0, dt=0.01, record_tau_step=0.1)
    t2 = evolve(sector, ModelParams(), T=5.0, dt=0.005, record_tau_step=0.1)
    fid = float(abs(np.vdot(t1.final_state, t2.final_state)))
    return Check("RK4 dt-halving convergence", fid > 1 - 1e-8,
                 f"final-state fidelity = {fid:.12f}")


def _check_endpoints() -> Check:
    lat = build_lattice(2)
    sector = enumerate_sector(lat, "winding00")
    res0 = lanczos_lowest(h0_action(ModelParams(tau=0.0), sector), sector.size)
    res1 = lanczos_lowest(h0_action(ModelParams(tau=1.0), sector), sector.size)
    e0_expect = -(100.0 * 4 + 1.0 * 8)
    e1_expect = -(100.0 * 4 + 1.0 * 4)
    ok = abs(res0.energies[0] - e0_expect) < 1e-9 and \
        abs(res1.energies[0] - e1_expect) < 1e-9
    return Check("analytic endpoint energies (k=2)", ok,
                 f"E(0)={res0.energies[0]:.6f} (expect {e0_expect}), "
                 f"E(1)={res1.energies[0]:.6f} (expect {e1_expect})")


def _check_calibration() -> Check:
    lat = build_lattice(3)
    cal = calibrate_ring(lat)
    psi, sector = exact_toric_ground_state(lat)
    vac = np.zeros(sector.size)
    vac[sector.index_of(0)] = 1.0
    s0 = topological_entropy(vac, sector, cal.regions)
    ok = abs(cal.stop_tau1 - 1.0) < 1e-6 and abs(s0) < 1e-9
    return Check("ring calibration S_top endpoints (k=3)", ok,
                 f"S_top(0)={s0:.2e}, S_top(1)={cal.stop_tau1:.9f}, "
                 f"ring diameter={cal.diameter}, partition={cal.partition}")


def _check_determinism() -> Check:
    config = ExperimentConfig(
        kind="sweep", k=2, sector="winding00", tau_step=0.25,
        observables=("energy", "entropy", "fidelity", "mz"),
        wilson_blocks=((1, 1), (2, 1)), seed=42,
    )
    with tempfile.TemporaryDirectory() as tmp:
        run_sweep(config, out_dir=Path(tmp) / "a")
        run_sweep(config, out_dir=Path(tmp) / "b")
        rows_a = (Path(tmp) / "a" / "rows.csv").read_bytes()
        rows_b = (Path(tmp) / "b" / "rows.csv").read_bytes()
        ok = rows_a == rows_b
    return Check("determinism: byte-identical rows.csv", ok,
                 "identical" if ok else "outputs differ")


def _check_lanczos_determinism() -> Check:
    lat = build_lattice(3)
    sector = enumerate_sector(lat, "winding00")
    act = h0_action(ModelParams(tau=0.7), sector)
    e1 = lanczos_lowest(act, sector.size).energies[0]
    e2 = lanczos_lowest(act, sector.size).energies[0]
    return Check("Lanczos determinism", abs(e1 - e2) < 1e-12,
                 f"|E0 rerun difference| = {abs(e1 - e2):.2e}")


def validate(out_dir: str | Path | None = None) -> ValidationReport:
    """Run every oracle/property check; optionally persist the report as JSON."""
    checks = [
        _check_masks(2), _check_masks(3), _check_masks(4),
        _check_dense_vs_lanczos(),
        _check_dense_vs_lanczos_perturbed(),
        _check_partial_trace(),
        _check_hermiticity(),
        _check_purity_symmetry(),
        _check_winding_preservation(),
        _check_rk4_convergence(),
        _check_endpoints(),
        _check_calibration(),
        _check_determinism(),
        _check_lanczos_determinism(),
    ]
    report = ValidationReport(checks)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validate.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report
