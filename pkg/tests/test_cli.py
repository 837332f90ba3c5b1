"""CLI surface: subcommands, flags and preset wiring."""

import json

import pytest

from toriclab.cli import _preset_jobs, build_parser, main


def test_masks_stdout(capsys):
    assert main(["masks", "--k", "2"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["n"] == 8


def test_masks_to_file(tmp_path):
    out = tmp_path / "masks.json"
    assert main(["masks", "--k", "3", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["n"] == 18


def test_sweep_subcommand(tmp_path, capsys):
    rc = main(["sweep", "--k", "2", "--sector", "winding00", "--tau-step", "0.5",
               "--seed", "3", "--out", str(tmp_path / "run"),
               "--observables", "energy", "mz"])
    assert rc == 0
    assert (tmp_path / "run" / "rows.csv").exists()


def test_dynamics_subcommand(tmp_path, capsys):
    rc = main(["dynamics", "--k", "2", "--sector", "winding00", "--T", "2",
               "--tau-step", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    assert "final F_ad" in capsys.readouterr().out


def test_ising_subcommand(tmp_path):
    rc = main(["ising", "--L", "4", "--tau-step", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "rows.csv").exists()


def test_all_spec_flags_parse():
    parser = build_parser()
    args = parser.parse_args(
        ["ensemble", "--k", "3", "--sector", "full", "--tau-step", "0.02",
         "--P", "10", "--hz", "uniform02", "--realizations", "20",
         "--T", "20", "40", "60", "--dt", "0.005", "--seed", "1",
         "--out", "somewhere", "--workers", "2"])
    assert args.P == 10.0 and args.hz == "uniform02" and args.workers == 2


@pytest.mark.parametrize("name,expected_kinds", [
    ("fig2a", {"dynamics"}),
    ("fig2b", {"dynamics"}),
    ("fig3", {"sweep", "ensemble"}),
    ("fig4", {"sweep"}),
    ("fig5", {"ising"}),
    ("fig6", {"sweep", "ensemble"}),
    ("fig7", {"sweep", "ensemble"}),
])
def test_preset_jobs(name, expected_kinds):
    parser = build_parser()
    args = parser.parse_args([name])
    jobs = _preset_jobs(name, args)
    assert jobs
    assert {kind for kind, _, _ in jobs} == expected_kinds
    labels = [label for _, label, _ in jobs]
    assert len(labels) == len(set(labels))
    for _, _, config in jobs:
        assert config.U == 100.0 and config.g == 1.0 and config.xi == 1.0


def test_fig7_covers_paper_perturbations():
    parser = build_parser()
    jobs = _preset_jobs("fig7", parser.parse_args(["fig7"]))
    ps = sorted(config.P for _, _, config in jobs)
    assert ps == [0.0, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0]
