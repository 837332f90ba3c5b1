"""Benchmark: compiled kernel vs pure-numpy fallback.

Times the fused Hamiltonian matvec on representative workloads (the
winding-sector sweep kernel and the full-space perturbed kernel) and a
seeded Lanczos ground-state solve end to end.

Run from the repository root after `pip install -e .`:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from toriclab import _kernels_py
from toriclab.basis import enumerate_sector
from toriclab.lattice import build_lattice
from toriclab.model import ModelParams, h0_action, perturbed_action, sample_field
from toriclab.solver import lanczos_lowest

try:
    from toriclab import _ckernels
except ImportError:
    _ckernels = None

REPS = 30


def time_matvec(kernel, act, psi):
    out = np.empty_like(psi)
    kernel(psi, act.diag, act.perms, act.coefs, out)  # warm-up
    t0 = time.perf_counter()
    for _ in range(REPS):
        kernel(psi, act.diag, act.perms, act.coefs, out)
    return (time.perf_counter() - t0) / REPS


def bench_case(label, act, dim):
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(dim)
    t_py = time_matvec(_kernels_py.apply_indexed_terms, act, psi)
    line = f"{label:<42} dim={dim:>7} terms={act.perms.shape[0]:>3}  python {t_py * 1e3:8.2f} ms"
    if _ckernels is not None:
        t_cy = time_matvec(_ckernels.apply_indexed_terms, act, psi)
        line += f"  cython {t_cy * 1e3:8.2f} ms  speedup {t_py / t_cy:5.1f}x"
    print(line)


def bench_lanczos(label, act, dim, backend_name, kernel):
    # HamiltonianAction resolves the kernel via the model module at call time
    import toriclab.model as model

    original = model.apply_indexed_terms
    model.apply_indexed_terms = kernel
    try:
        t0 = time.perf_counter()
        res = lanczos_lowest(act, dim, tol=1e-10)
        dt = time.perf_counter() - t0
        print(f"{label:<42} {backend_name:>7}: E0={res.energies[0]:.6f} "
              f"iters={res.iterations} in {dt:6.2f} s")
    finally:
        model.apply_indexed_terms = original


def main():
    print(f"compiled extension available: {_ckernels is not None}\n")
    print("-- fused matvec --")
    lat3 = build_lattice(3)
    lat4 = build_lattice(4)

    sector4 = enumerate_sector(lat4, "winding00")
    act4 = h0_action(ModelParams(tau=0.7), sector4)
    bench_case("k=4 winding sector sweep kernel", act4, sector4.size)

    full3 = enumerate_sector(lat3, "full")
    fld = sample_field(lat3, P=10.0, seed=7)
    act3 = perturbed_action(ModelParams(tau=0.7), fld, full3)
    bench_case("k=3 full-space perturbed kernel", act3, full3.size)

    gauge4 = enumerate_sector(lat4, "gauge")
    actg = h0_action(ModelParams(tau=0.7), gauge4)
    bench_case("k=4 gauge-invariant kernel", actg, gauge4.size)

    print("\n-- seeded Lanczos ground state (k=4 winding sector, tau=0.7) --")
    if _ckernels is not None:
        act = h0_action(ModelParams(tau=0.7), enumerate_sector(lat4, "winding00"))
        bench_lanczos("ground state solve", act, sector4.size, "cython",
                      _ckernels.apply_indexed_terms)
    act = h0_action(ModelParams(tau=0.7), enumerate_sector(lat4, "winding00"))
    bench_lanczos("ground state solve", act, sector4.size, "python",
                  _kernels_py.apply_indexed_terms)


if __name__ == "__main__":
    main()
