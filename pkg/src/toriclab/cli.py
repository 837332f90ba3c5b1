"""Command-line interface.

Core subcommands run a single experiment (`sweep`, `ensemble`, `dynamics`,
`ising`, `validate`, `masks`); the figure presets (`fig2a` ... `fig7`)
bundle the standard study parameters (U=100, g=xi=1, tau step 0.01,
T in {20,40,60}, the usual perturbation strengths) into ready-made runs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path


from .lattice import build_lattice, mask_dump_json
from .observables import peak_analysis
from .runner import (DEFAULT_OBSERVABLES, ExperimentConfig, run_dynamics,
                     run_ensemble, run_ising_control, run_sweep)
from .validate import validate


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--k", type=int, default=4, help="linear lattice size (n = 2k^2)")
    p.add_argument("--sector", choices=("winding00", "gauge", "full"),
                   default="winding00")
    p.add_argument("--tau-step", type=float, default=0.01)
    p.add_argument("--P", type=float, default=0.0, help="x-field amplitude bound")
    p.add_argument("--hz", choices=("zero", "uniform02"), default="zero")
    p.add_argument("--realizations", type=int, default=1)
    p.add_argument("--T", type=float, nargs="+", default=[20.0, 40.0, 60.0])
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--observables", nargs="+", default=None,
                   help="subset of energy entropy fidelity stop wilson mz gap overlap")


def _config_from(args, kind: str) -> ExperimentConfig:
    obs = tuple(args.observables) if args.observables else DEFAULT_OBSERVABLES
    return ExperimentConfig(
        kind=kind, k=args.k, sector=args.sector, tau_step=args.tau_step,
        observables=obs, P=args.P, hz_mode=args.hz,
        realizations=args.realizations, T_list=tuple(args.T), dt=args.dt,
        seed=args.seed, out_dir=args.out, workers=args.workers,
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="toriclab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("sweep", "ensemble", "dynamics"):
        p = sub.add_parser(name)
        _add_common(p)

    p = sub.add_parser("ising", help="transverse-field Ising control sweep")
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--tau-step", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("validate", help="run the oracle/property suite")
    p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("masks", help="dump lattice masks and regions as JSON")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--out", type=str, default=None)

    for name in ("fig2a", "fig2b", "fig3", "fig4", "fig5", "fig6", "fig7"):
        p = sub.add_parser(name, help=f"preset bundle {name}")
        p.add_argument("--out", type=str, default=f"out/{name}")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--realizations", type=int, default=20)
    return ap


# ---------------------------------------------------------------------------
# figure presets
# ---------------------------------------------------------------------------

def _preset_jobs(name: str, args) -> list[tuple[str, str, ExperimentConfig]]:
    base = ExperimentConfig(seed=args.seed, workers=args.workers)
    R = args.realizations
    jobs: list[tuple[str, str, ExperimentConfig]] = []
    if name == "fig2a":
        jobs.append(("dynamics", "L18_ideal", replace(
            base, kind="dynamics", k=3, sector="winding00", T_list=(20.0, 40.0, 60.0))))
    elif name == "fig2b":
        jobs.append(("dynamics", "L8_ideal", replace(
            base, kind="dynamics", k=2, sector="full", T_list=(20.0, 40.0, 60.0))))
        jobs.append(("dynamics", "L8_P1", replace(
            base, kind="dynamics", k=2, sector="full", P=1.0,
            realizations=min(R, 10), T_list=(20.0, 40.0, 60.0))))
    elif name == "fig3":
        for k in (2, 3, 4):
            jobs.append(("sweep", f"L{2 * k * k}_ideal", replace(
                base, kind="sweep", k=k, sector="winding00")))
        for P in (2.0, 10.0, 40.0):
            jobs.append(("ensemble", f"L18_P{P:g}", replace(
                base, kind="ensemble", k=3, sector="full", P=P, realizations=R,
                observables=("energy", "entropy", "fidelity", "stop", "mz", "overlap"))))
    elif name == "fig4":
        jobs.append(("sweep", "L32_wilson", replace(base, kind="sweep", k=4)))
    elif name == "fig5":
        jobs.append(("ising", "ising_L4", replace(base, kind="ising-control")))
    elif name == "fig6":
        for k in (3, 4):
            jobs.append(("sweep", f"L{2 * k * k}_ideal", replace(
                base, kind="sweep", k=k, sector="winding00")))
        jobs.append(("ensemble", "L18_P10", replace(
            base, kind="ensemble", k=3, sector="full", P=10.0, realizations=R)))
    elif name == "fig7":
        for P in (0.0, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0):
            kind = "sweep" if P == 0 else "ensemble"
            sector = "winding00" if P == 0 else "full"
            jobs.append((kind, f"L18_P{P:g}", replace(
                base, kind=kind, k=3, sector=sector, P=P,
                realizations=1 if P == 0 else R)))
    return jobs


def _run_preset(name: str, args) -> int:
    root = Path(args.out)
    summary = {}
    for kind, label, config in _preset_jobs(name, args):
        out = root / label
        print(f"[{name}] {kind} -> {out}")
        if kind == "sweep":
            res = run_sweep(config, out_dir=out)
            summary[label] = res.report
        elif kind == "ensemble":
            res = run_ensemble(config, out_dir=out)
            summary[label] = res.report
        elif kind == "ising":
            res = run_ising_control(config, out_dir=out)
            summary[label] = res.report
        elif kind == "dynamics":
            traces = run_dynamics(config, out_dir=out)
            summary[label] = {
                f"T{T:g}_r{r}": {"final_F_ad": float(t.f_ad[-1]),
                                 "max_leakage": float(max(t.leakage[k].max()
                                                          for k in t.leakage))}
                for (T, r), t in traces.items()
            }
    if name == "fig7":
        summary["fwhm_vs_P"] = _fig7_inset(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"[{name}] summary -> {root / 'summary.json'}")
    return 0


def _fig7_inset(root: Path) -> list[dict]:
    """Peak height and FWHM of d(S_top)/dtau as a function of P."""
    from .runner import read_table

    rows = []
    for d in sorted(root.glob("L18_P*")):
        table = read_table(d / "derived.csv")
        if "d1_s_top" not in table:
            continue
        P = float(d.name.split("_P")[1])
        try:
            pk = peak_analysis(table["tau"], table["d1_s_top"])
            rows.append({"P": P, "peak_height": pk.height,
                         "peak_location": pk.location, "fwhm": pk.fwhm})
        except Exception as err:  # monotone series: record the absence
            rows.append({"P": P, "error": str(err)})
    return sorted(rows, key=lambda r: r["P"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command

    if cmd == "sweep":
        config = _config_from(args, "sweep")
        res = run_sweep(config, out_dir=args.out)
        print(json.dumps(res.report, indent=2))
        return 0
    if cmd == "ensemble":
        config = _config_from(args, "ensemble")
        if config.P > 0:
            config = replace(config, sector="full")
        res = run_ensemble(config, out_dir=args.out)
        print(json.dumps(res.report, indent=2))
        return 0
    if cmd == "dynamics":
        config = _config_from(args, "dynamics")
        traces = run_dynamics(config, out_dir=args.out)
        for (T, r), t in sorted(traces.items()):
            print(f"T={T:g} r={r}: final F_ad={t.f_ad[-1]:.6f}, "
                  f"max leakage={max(t.leakage[k].max() for k in t.leakage):.2e}")
        return 0
    if cmd == "ising":
        config = ExperimentConfig(kind="ising-control", ising_L=args.L,
                                  tau_step=args.tau_step, seed=args.seed)
        res = run_ising_control(config, out_dir=args.out)
        print(json.dumps(res.report, indent=2))
        return 0
    if cmd == "validate":
        report = validate(out_dir=args.out)
        print(report.table())
        return 0 if report.all_passed else 1
    if cmd == "masks":
        text = mask_dump_json(build_lattice(args.k))
        if args.out:
            Path(args.out).write_text(text)
        else:
            print(text)
        return 0
    return _run_preset(cmd, args)


if __name__ == "__main__":
    sys.exit(main())
