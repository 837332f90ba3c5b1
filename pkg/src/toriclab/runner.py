"""Experiment orchestration: sweeps, ensembles, dynamics campaigns, controls.

Every experiment is described by an ExperimentConfig, runs deterministically
from its master seed, and persists to an output directory:

    rows.csv        one row per tau (crash-safe incremental appends)
    derived.csv     finite-difference derivative columns (written on completion)
    meta.json       config echo, seeds, calibration, critical-point report
    checkpoint.npz  resume state while a sweep is in flight

Interrupted sweeps resume from the last completed row and reproduce the
uninterrupted output byte for byte.  Ensembles run one seeded sweep per
realization (optionally across worker processes) and aggregate mean/stddev.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .basis import enumerate_sector, sector_mixing_detector
from .dynamics import EvolutionTrace, adiabaticity_dip, evolve
from .kernels import BACKEND
from .lattice import Region, TorusLattice, build_lattice, plaq_mask, wilson_region
from .model import (HZ_MODES, IsingLattice, ModelParams, gauge_block_matrix,
                    h0_action, ising_action, ising_basis, perturbed_action,
                    sample_field)
from .observables import (NoPeakError, ObservableRecord, calibrate_ring,
                          entanglement_entropy, finite_difference,
                          magnetization_z, peak_analysis, ring_cut_entropies,
                          state_fidelity, wilson_expectation)
from .solver import SolverError, branch_ground_state, lanczos_lowest

DEFAULT_OBSERVABLES = ("energy", "entropy", "fidelity", "stop", "wilson", "mz")
ALL_OBSERVABLES = DEFAULT_OBSERVABLES + ("gap", "overlap")
DEFAULT_WILSON_BLOCKS = ((1, 1), (2, 1), (2, 2), (3, 2), (3, 3))
DETECTOR_DISAGREEMENT = 0.02
SECTOR_CHOICES = ("winding00", "gauge", "full")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, serializable description of one experiment."""

    kind: str = "sweep"  # sweep | ensemble | dynamics | ising-control | validate
    k: int = 4
    sector: str = "winding00"
    tau_start: float = 0.0
    tau_stop: float = 1.0
    tau_step: float = 0.01
    observables: tuple[str, ...] = DEFAULT_OBSERVABLES
    U: float = 100.0
    g: float = 1.0
    xi: float = 1.0
    P: float = 0.0
    hz_mode: str = "zero"
    realizations: int = 1
    T_list: tuple[float, ...] = (20.0, 40.0, 60.0)
    dt: float | None = None
    ising_L: int = 4
    seed: int = 0
    out_dir: str | None = None
    workers: int = 1
    wilson_blocks: tuple[tuple[int, int], ...] = DEFAULT_WILSON_BLOCKS
    solver_tol: float = 1e-10
    solver_engine: str = "auto"  # auto | lanczos | lobpcg

    def __post_init__(self):
        if self.tau_step <= 0:
            raise ValueError("tau_step must be positive")
        if self.realizations < 1:
            raise ValueError("realization count must be >= 1")
        if self.sector not in SECTOR_CHOICES:
            raise ValueError(f"sector must be one of {SECTOR_CHOICES}")
        if self.hz_mode not in HZ_MODES:
            raise ValueError(f"hz_mode must be one of {HZ_MODES}")
        unknown = set(self.observables) - set(ALL_OBSERVABLES)
        if unknown:
            raise ValueError(f"unknown observables {sorted(unknown)}")

    @property
    def tau_grid(self) -> np.ndarray:
        num = int(round((self.tau_stop - self.tau_start) / self.tau_step))
        return np.round(self.tau_start + self.tau_step * np.arange(num + 1), 10)

    @property
    def params(self) -> ModelParams:
        return ModelParams(U=self.U, g=self.g, xi=self.xi, tau=self.tau_start)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observables"] = list(self.observables)
        d["T_list"] = list(self.T_list)
        d["wilson_blocks"] = [list(b) for b in self.wilson_blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["observables"] = tuple(d["observables"])
        d["T_list"] = tuple(d["T_list"])
        d["wilson_blocks"] = tuple(tuple(b) for b in d["wilson_blocks"])
        return cls(**d)


def realization_seed(master_seed: int, realization: int) -> np.random.SeedSequence:
    """Independent, reproducible stream per ensemble realization."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(realization,))


# ---------------------------------------------------------------------------
# CSV helpers (byte-deterministic)
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _wilson_labels(blocks) -> list[str]:
    return [f"w_{w}x{h}" for (w, h) in blocks]


def sweep_header(config: ExperimentConfig) -> list[str]:
    head = ["tau", "lam", "energy", "energy_per_spin", "gap", "s_block", "f_dtau",
            "overlap_ideal", "s_top", "s_a", "s_ab", "s_ac", "s_abc", "m_z"]
    head += _wilson_labels(config.wilson_blocks)
    head += ["solver_iters", "solver_residual"]
    return head


def _record_to_row(rec: ObservableRecord, config: ExperimentConfig) -> list:
    row = [rec.tau, rec.lam, rec.energy, rec.energy_per_spin, rec.gap, rec.s_block,
           rec.f_dtau, rec.overlap_ideal, rec.s_top, rec.s_a, rec.s_ab, rec.s_ac,
           rec.s_abc, rec.m_z]
    wilson = rec.wilson or {}
    row += [wilson.get(lbl, math.nan) for lbl in _wilson_labels(config.wilson_blocks)]
    row += [rec.solver_iters, rec.solver_residual]
    return row


def read_table(path: Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = [line.strip().split(",") for line in fh if line.strip()]
    cols = np.array(data, dtype=float).T if data else np.zeros((len(header), 0))
    return {name: cols[i] for i, name in enumerate(header)}


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    config: ExperimentConfig
    table: dict[str, np.ndarray]
    derived: dict[str, np.ndarray]
    report: dict
    out_dir: Path | None = None


def _plaquette_block_region(lat: TorusLattice) -> Region:
    return Region(plaq_mask(lat, 0).sites, "plaquette-block")


class _SweepEngine:
    """One tau-ascending ground-state sweep with seeded continuation."""

    def __init__(self, config: ExperimentConfig, realization: int = 0):
        self.config = config
        self.realization = realization
        self.lat = build_lattice(config.k)
        self.basis = enumerate_sector(self.lat, config.sector)
        self.params = config.params
        self.field = None
        if config.P > 0 or config.hz_mode != "zero":
            if config.sector != "full":
                raise ValueError("perturbed sweeps need sector='full'")
            self.field = sample_field(self.lat, config.P, config.hz_mode,
                                      seed=realization_seed(config.seed, realization))
        obs = set(config.observables)
        self.want = obs
        self.block = _plaquette_block_region(self.lat) if "entropy" in obs else None
        self.ring = None
        if "stop" in obs and self.lat.k >= 3:
            self.ring = calibrate_ring(self.lat)
        self.wilson = []
        if "wilson" in obs:
            self.wilson = [
                ((w, h), wilson_region(self.lat, w, h))
                for (w, h) in config.wilson_blocks if w <= self.lat.k and h <= self.lat.k
            ]
        if config.solver_engine == "auto":
            stiff = config.sector == "full" and self.basis.size > 65536
            self.engine = "lobpcg" if stiff else "lanczos"
        else:
            self.engine = config.solver_engine
        self.gauge_basis = None
        if self.engine == "lobpcg" and config.sector == "full":
            self.gauge_basis = enumerate_sector(self.lat, "gauge")
        # branch tracking only matters for reference-sensitive columns
        self.mixing_detector = sector_mixing_detector(self.basis) \
            if (self.field is not None and "overlap" in obs) else None
        self.ideal_basis = None
        self.ideal_seed = None
        if "overlap" in obs and config.sector == "full":
            self.ideal_basis = enumerate_sector(self.lat, "winding00")
            seed = np.zeros(self.ideal_basis.size)
            seed[self.ideal_basis.index_of(0)] = 1.0
            self.ideal_seed = seed

    def action_at(self, tau: float):
        params = self.params.at(tau)
        if self.field is not None:
            return perturbed_action(params, self.field, self.basis)
        return h0_action(params, self.basis)

    def solve(self, tau: float, seed, prev_branch, seed_extrap=None):
        """Ground state at tau: plain seeded Lanczos, or the adiabatically
        continued branch when a perturbation splits the ground manifold."""
        act = self.action_at(tau)
        count = 2 if "gap" in self.want else 1
        precond = None
        if self.gauge_basis is not None:
            precond = (self.gauge_basis.configs.astype(np.int64),
                       gauge_block_matrix(self.params.at(tau), self.gauge_basis))
        if self.field is not None and count == 1 and self.mixing_detector is not None:
            psi, res = branch_ground_state(act, self.basis.size, prev_branch,
                                           tol=self.config.solver_tol,
                                           mixing_detector=self.mixing_detector,
                                           engine=self.engine)
            if len(res.states) > 1:
                energy = float(np.real(psi @ act(psi)))
            else:
                energy = float(res.energies[0])
            return psi, res, energy
        if count == 1 and seed_extrap is not None:
            seed = seed_extrap
        res = lanczos_lowest(act, self.basis.size, seed_vector=seed, count=count,
                             tol=self.config.solver_tol, engine=self.engine,
                             precond_block=precond)
        psi = res.states[0]
        if prev_branch is not None and count == 1 and float(prev_branch @ psi) < 0:
            psi = -psi
        return psi, res, float(res.energies[0])

    def measure(self, tau: float, psi, res, energy, prev_psi) -> ObservableRecord:
        params = self.params.at(tau)
        rec = ObservableRecord(
            tau=tau, lam=params.lam,
            energy=energy,
            energy_per_spin=energy / self.lat.n,
            solver_iters=res.iterations,
            solver_residual=float(res.residuals.max()),
        )
        if "gap" in self.want:
            rec.gap = res.gap
        if self.block is not None:
            rec.s_block = entanglement_entropy(psi, self.basis, self.block)
        if "fidelity" in self.want and prev_psi is not None:
            states = res.states if (res.degenerate and self.field is None) else psi
            rec.f_dtau = state_fidelity(states, prev_psi)
        if self.ring is not None:
            cuts = ring_cut_entropies(psi, self.basis, self.ring.regions)
            rec.s_a, rec.s_ab = cuts["A"], cuts["AB"]
            rec.s_ac, rec.s_abc = cuts["AC"], cuts["ABC"]
            rec.s_top = rec.s_ab + rec.s_ac - rec.s_abc - rec.s_a
        if self.wilson:
            rec.wilson = {f"w_{w}x{h}": wilson_expectation(psi, self.basis, reg)
                          for (w, h), reg in self.wilson}
        if "mz" in self.want:
            rec.m_z = magnetization_z(psi, self.basis)
        if self.ideal_basis is not None:
            ideal = lanczos_lowest(h0_action(params, self.ideal_basis),
                                   self.ideal_basis.size, seed_vector=self.ideal_seed,
                                   tol=self.config.solver_tol)
            self.ideal_seed = ideal.states[0]
            rec.overlap_ideal = state_fidelity(
                ideal.states[0], psi, self.ideal_basis, self.basis)
        rec.check_ranges()
        return rec

    def meta(self) -> dict:
        out = {
            "config": self.config.to_dict(),
            "realization": self.realization,
            "backend": BACKEND,
            "version": __version__,
            "sector_size": self.basis.size,
            "n_spins": self.lat.n,
        }
        if self.field is not None:
            out["field"] = self.field.to_dict()
            out["field_seed_spawn_key"] = [self.realization]
        if self.ring is not None:
            out["ring_calibration"] = self.ring.to_dict()
        return out


def _derived_columns(taus: np.ndarray, table: dict) -> dict[str, np.ndarray]:
    out = {"tau": taus}
    step = float(taus[1] - taus[0]) if len(taus) > 1 else math.nan
    if len(taus) >= 5 and np.isfinite(table["energy_per_spin"]).all():
        out["d2_energy_per_spin"] = finite_difference(table["energy_per_spin"], step, 2)
    if len(taus) >= 3 and np.isfinite(table["s_block"]).all():
        out["d1_s_block"] = finite_difference(table["s_block"], step, 1)
    if len(taus) >= 3 and np.isfinite(table["s_top"]).all():
        out["d1_s_top"] = finite_difference(table["s_top"], step, 1)
    return out


def _critical_report(taus: np.ndarray, table: dict, derived: dict) -> dict:
    report: dict = {}
    if "d2_energy_per_spin" in derived:
        try:
            pk = peak_analysis(taus, np.abs(derived["d2_energy_per_spin"]))
            report["tau_c_energy"] = {"location": pk.location, "height": pk.height,
                                      "fwhm": pk.fwhm}
        except NoPeakError:
            report["tau_c_energy"] = None
    f = table.get("f_dtau")
    if f is not None and np.isfinite(f[1:]).all() and len(f) > 2:
        i = 1 + int(np.argmin(f[1:]))
        report["tau_c_fidelity"] = {"location": float(taus[i]),
                                    "min_fidelity": float(f[i])}
    if "d1_s_top" in derived:
        try:
            pk = peak_analysis(taus, derived["d1_s_top"])
            report["tau_c_stop"] = {"location": pk.location, "height": pk.height,
                                    "fwhm": pk.fwhm}
        except NoPeakError:
            report["tau_c_stop"] = None
    locs = [v["location"] for v in report.values() if v]
    if len(locs) >= 2:
        spread = max(locs) - min(locs)
        report["detector_spread"] = spread
        report["detectors_disagree"] = bool(spread > DETECTOR_DISAGREEMENT)
    return report


def run_sweep(config: ExperimentConfig, realization: int = 0,
              out_dir: str | Path | None = None) -> SweepResult:
    """Ground-state sweep over the tau grid with crash-safe persistence."""
    engine = _SweepEngine(config, realization)
    taus = config.tau_grid
    out = Path(out_dir) if out_dir else (Path(config.out_dir) if config.out_dir else None)
    header = sweep_header(config)

    rows_path = meta_path = ckpt_path = None
    done_rows: list[str] = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        rows_path = out / "rows.csv"
        meta_path = out / "meta.json"
        ckpt_path = out / "checkpoint.npz"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            if meta.get("complete"):
                return load_sweep(out)

    start_idx = 0
    seed = None
    prev_psi = None
    prev_psi2 = None
    if ckpt_path is not None and ckpt_path.exists() and rows_path.exists():
        with open(rows_path) as fh:
            lines = fh.read().splitlines()
        if lines and lines[0] == ",".join(header):
            done_rows = lines[1:]
        ck = np.load(ckpt_path, allow_pickle=False)
        if int(ck["row_count"]) == len(done_rows) and len(done_rows) > 0:
            start_idx = len(done_rows)
            seed = tuple(ck[f"state{i}"] for i in range(int(ck["n_states"])))
            prev_psi = ck["branch"]
            if "branch2" in ck:
                prev_psi2 = ck["branch2"]
            if "ideal_seed" in ck and engine.ideal_seed is not None:
                engine.ideal_seed = ck["ideal_seed"]
        else:
            done_rows = []

    if out is not None and start_idx == 0:
        with open(rows_path, "w") as fh:
            fh.write(",".join(header) + "\n")
        meta = engine.meta()
        meta["complete"] = False
        meta["started_at"] = time.time()
        meta_path.write_text(json.dumps(meta, indent=2))
        done_rows = []

    t_start = time.time()
    records: list[list] = [r.split(",") for r in done_rows]
    row_errors: list[dict] = []
    for i in range(start_idx, len(taus)):
        tau = float(taus[i])
        extrap = None
        if prev_psi is not None and prev_psi2 is not None:
            # first-order continuation seed: halves the warm-start residual
            extrap = 2.0 * prev_psi - prev_psi2
            extrap /= np.linalg.norm(extrap)
        try:
            psi, res, energy = engine.solve(tau, seed, prev_psi, seed_extrap=extrap)
            rec = engine.measure(tau, psi, res, energy, prev_psi)
            prev_psi2 = prev_psi
            prev_psi = psi
            seed = tuple(res.states)
        except SolverError as err:
            # record the failed row and continue the sweep with the old seed
            rec = ObservableRecord(tau=tau)
            row_errors.append({"tau": tau, "error": str(err)})
        row = _record_to_row(rec, config)
        records.append([_fmt(v) for v in row])
        if out is not None:
            with open(rows_path, "a") as fh:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
            if prev_psi is not None and seed is not None:
                ck = {"row_count": np.array(i + 1),
                      "n_states": np.array(len(seed)), "branch": prev_psi}
                if prev_psi2 is not None:
                    ck["branch2"] = prev_psi2
                for j, st in enumerate(seed):
                    ck[f"state{j}"] = st
                if engine.ideal_seed is not None:
                    ck["ideal_seed"] = engine.ideal_seed
                np.savez(ckpt_path, **ck)

    table = {name: np.array([float(r[j]) for r in records])
             for j, name in enumerate(header)}
    derived = _derived_columns(taus, table)
    report = _critical_report(taus, table, derived)

    if out is not None:
        _write_csv(out / "derived.csv", list(derived.keys()),
                   zip(*derived.values()))
        meta = json.loads(meta_path.read_text())
        meta.update(engine.meta())
        meta["complete"] = True
        meta["rows"] = len(records)
        meta["row_errors"] = row_errors
        meta["runtime_s"] = time.time() - t_start
        meta["report"] = report
        meta_path.write_text(json.dumps(meta, indent=2))
        if ckpt_path.exists():
            ckpt_path.unlink()

    return SweepResult(config, table, derived, report, out)


def load_sweep(out_dir: str | Path) -> SweepResult:
    out = Path(out_dir)
    meta = json.loads((out / "meta.json").read_text())
    config = ExperimentConfig.from_dict(meta["config"])
    table = read_table(out / "rows.csv")
    derived = read_table(out / "derived.csv") if (out / "derived.csv").exists() else {}
    return SweepResult(config, table, derived, meta.get("report", {}), out)


# ---------------------------------------------------------------------------
# ensemble
# ---------------------------------------------------------------------------

@dataclass
class EnsembleResult:
    config: ExperimentConfig
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    derived: dict[str, np.ndarray]
    report: dict
    out_dir: Path | None = None


def _run_one_realization(args) -> str:
    config_dict, r, out_dir = args
    config = ExperimentConfig.from_dict(config_dict)
    run_sweep(config, realization=r, out_dir=out_dir)
    return out_dir


def run_ensemble(config: ExperimentConfig,
                 out_dir: str | Path | None = None) -> EnsembleResult:
    """Realization-averaged perturbed sweep; derivatives act on the mean curves."""
    out = Path(out_dir) if out_dir else (Path(config.out_dir) if config.out_dir else None)
    if config.P > 0 and config.sector != "full":
        raise ValueError("perturbed ensembles need sector='full'")
    reals = list(range(config.realizations))
    if out is None:
        results = [run_sweep(config, realization=r) for r in reals]
    else:
        out.mkdir(parents=True, exist_ok=True)
        jobs = [(config.to_dict(), r, str(out / f"real_{r:03d}")) for r in reals]
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                list(pool.map(_run_one_realization, jobs))
        else:
            for job in jobs:
                _run_one_realization(job)
        results = [load_sweep(out / f"real_{r:03d}") for r in reals]

    taus = config.tau_grid
    keys = [k for k in results[0].table if k != "tau"]
    stack = {k: np.stack([res.table[k] for res in results]) for k in keys}

    def col_stats(arr):
        # identical realizations (P=0) must average to themselves exactly
        if np.all(arr == arr[0]):
            return arr[0].copy(), np.zeros(arr.shape[1])
        with np.errstate(invalid="ignore"):
            return arr.mean(axis=0), arr.std(axis=0)

    stats = {k: col_stats(stack[k]) for k in keys}
    mean = {"tau": taus} | {k: stats[k][0] for k in keys}
    std = {"tau": np.zeros_like(taus)} | {k: stats[k][1] for k in keys}
    derived = _derived_columns(taus, mean)
    report = _critical_report(taus, mean, derived)

    if out is not None:
        _write_csv(out / "mean.csv", list(mean.keys()), zip(*mean.values()))
        _write_csv(out / "std.csv", list(std.keys()), zip(*std.values()))
        _write_csv(out / "derived.csv", list(derived.keys()), zip(*derived.values()))
        meta = {
            "config": config.to_dict(),
            "backend": BACKEND,
            "version": __version__,
            "realizations": config.realizations,
            "realization_seeds": [str(realization_seed(config.seed, r)) for r in reals],
            "report": report,
            "complete": True,
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=2))
    return EnsembleResult(config, mean, std, derived, report, out)


# ---------------------------------------------------------------------------
# dynamics campaign
# ---------------------------------------------------------------------------

DYNAMICS_HEADER = ["tau", "F_ad", "leak_01", "leak_10", "leak_11", "norm_drift"]


def run_dynamics(config: ExperimentConfig,
                 out_dir: str | Path | None = None) -> dict[tuple[float, int], EvolutionTrace]:
    """One evolution per (total time T, realization)."""
    lat = build_lattice(config.k)
    perturbed = config.P > 0 or config.hz_mode != "zero"
    if perturbed:
        if config.sector != "full":
            raise ValueError("perturbed dynamics needs sector='full'")
        if config.k > 2:
            raise ValueError("perturbed dynamics guard: k=2 (n=8) only")
    basis = enumerate_sector(lat, config.sector)
    out = Path(out_dir) if out_dir else (Path(config.out_dir) if config.out_dir else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    traces: dict[tuple[float, int], EvolutionTrace] = {}
    reals = range(config.realizations if perturbed else 1)
    for T in config.T_list:
        for r in reals:
            fld = None
            if perturbed:
                fld = sample_field(lat, config.P, config.hz_mode,
                                   seed=realization_seed(config.seed, r))
            trace = evolve(basis, config.params, T, fld=fld, dt=config.dt,
                           record_tau_step=config.tau_step,
                           gs_tol=config.solver_tol)
            traces[(T, r)] = trace
            if out is not None:
                stem = f"T{T:g}_r{r:03d}"
                _write_csv(out / f"trace_{stem}.csv", DYNAMICS_HEADER, trace.to_rows())
                meta = {
                    "config": config.to_dict(),
                    "T": T,
                    "dt": trace.dt,
                    "realization": r,
                    "field": fld.to_dict() if fld is not None else None,
                    "backend": BACKEND,
                    "version": __version__,
                    "dip_tau": adiabaticity_dip(trace),
                    "final_F_ad": float(trace.f_ad[-1]),
                    "max_leakage": float(max(trace.leakage[k].max()
                                             for k in trace.leakage)),
                }
                (out / f"trace_{stem}.json").write_text(json.dumps(meta, indent=2))
    return traces


# ---------------------------------------------------------------------------
# Ising control
# ---------------------------------------------------------------------------

ISING_HEADER = ["tau", "energy", "energy_per_spin", "s_block", "s_top",
                "s_a", "s_ab", "s_ac", "s_abc", "solver_iters", "solver_residual"]


def run_ising_control(config: ExperimentConfig,
                      out_dir: str | Path | None = None) -> SweepResult:
    """Transverse-field Ising sweep (J=tau, h=1-tau) on an L x L vertex torus."""
    ising = IsingLattice(config.ising_L)
    if ising.L < 4:
        raise ValueError("control needs L >= 4 for the 8-vertex ring")
    basis = ising_basis(ising)
    taus = config.tau_grid

    block = Region(sum(1 << s for s in ising.block_sites()), "plaquette-block")
    ring = ising.ring_sites()
    q = len(ring) // 4

    def arc(idxs):
        return sum(1 << ring[i] for i in idxs)

    a = arc(range(2 * q))
    b = arc(range(2 * q, 3 * q))
    c = arc(range(3 * q, 4 * q))
    regions = {
        "A": Region(a, "A"), "AB": Region(a | b, "AB"),
        "AC": Region(a | c, "AC"), "ABC": Region(a | b | c, "ABC"),
    }

    rows = []
    seed = None
    for tau in taus:
        act = ising_action(float(tau), 1.0 - float(tau), ising, basis)
        res = lanczos_lowest(act, basis.size, seed_vector=seed,
                             tol=config.solver_tol)
        seed = res.states[0]
        psi = res.states[0]
        cuts = ring_cut_entropies(psi, basis, regions)
        s_top = cuts["AB"] + cuts["AC"] - cuts["ABC"] - cuts["A"]
        rows.append([float(tau), float(res.energies[0]),
                     float(res.energies[0]) / ising.m,
                     entanglement_entropy(psi, basis, block), s_top,
                     cuts["A"], cuts["AB"], cuts["AC"], cuts["ABC"],
                     res.iterations, float(res.residuals.max())])

    table = {name: np.array([r[j] for r in rows]) for j, name in enumerate(ISING_HEADER)}
    step = config.tau_step
    derived = {"tau": taus}
    if len(taus) >= 3:
        derived["d1_s_block"] = finite_difference(table["s_block"], step, 1)
        derived["d1_s_top"] = finite_difference(table["s_top"], step, 1)
    report = {}
    if "d1_s_block" in derived:
        try:
            pk = peak_analysis(taus, np.abs(derived["d1_s_block"]))
            report["tau_c_block_entropy"] = {"location": pk.location,
                                             "height": pk.height, "fwhm": pk.fwhm}
        except NoPeakError:
            report["tau_c_block_entropy"] = None
    report["max_abs_s_top"] = float(np.abs(table["s_top"]).max())

    out = Path(out_dir) if out_dir else (Path(config.out_dir) if config.out_dir else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "rows.csv", ISING_HEADER, rows)
        _write_csv(out / "derived.csv", list(derived.keys()), zip(*derived.values()))
        meta = {"config": config.to_dict(), "m_spins": ising.m, "backend": BACKEND,
                "version": __version__, "report": report, "complete": True}
        (out / "meta.json").write_text(json.dumps(meta, indent=2))
    return SweepResult(config, table, derived, report, out)
