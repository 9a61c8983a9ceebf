import argparse
import json
import re
from pathlib import Path

import numpy as np
import pytest

from fintime.cli import build_parser, main

FIG1 = Path(__file__).parents[1] / "configs" / "fig1.cfg"


def _subparsers():
    parser = build_parser()
    [action] = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    return action.choices


def test_run_fig1_writes_outputs(tmp_path, capsys):
    assert main(["run", str(FIG1), "-o", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["fig1_report.json", "fig1_run0.csv", "fig1_run1.csv", "fig1_run2.csv", "fig1_run3.csv"]
    report = json.loads((tmp_path / "fig1_report.json").read_text())
    assert all(r["termination"] == "converged" for r in report["runs"])


def test_run_outputs_are_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(FIG1), "-o", str(a)]) == 0
    assert main(["run", str(FIG1), "-o", str(b), "--threads", "1"]) == 0
    for fa in sorted(a.iterdir()):
        assert fa.read_bytes() == (b / fa.name).read_bytes()


def test_run_refuses_overwrite_without_force(tmp_path, capsys):
    assert main(["run", str(FIG1), "-o", str(tmp_path)]) == 0
    assert main(["run", str(FIG1), "-o", str(tmp_path)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["run", str(FIG1), "-o", str(tmp_path), "--force"]) == 0


def test_integrate_gradient_flow(capsys):
    code = main(["integrate", "--objective", "quadratic-identity", "--flow", "gradient", "--x0", "1,0", "--t-max", "1"])
    assert code == 0
    out = capsys.readouterr().out
    x_final = [float(v) for v in re.search(r"x_final: (.*)", out).group(1).split(",")]
    np.testing.assert_allclose(x_final, [np.exp(-1), 0.0], atol=1e-6)


def test_integrate_rosenbrock_flags(tmp_path, capsys):
    csv_path = tmp_path / "traj.csv"
    argv = ["integrate", "--objective", "rosenbrock", "--a", "2", "--b", "50", "--flow", "gnf1", "--c", "7",
            "--p", "1", "--r", "-1", "--x0", "0,0", "--t-max", "2", "--csv", str(csv_path)]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "termination: converged" in out
    # c = 7 with |grad f(0,0)| = 4 settles at 4/7
    assert float(re.search(r"settling: (\S+)", out).group(1)) == pytest.approx(4 / 7, rel=1e-6)
    assert csv_path.read_text().startswith("t,x1,x2,f,gnorm2,gnorm1,V\n")
    assert main(argv) == 2  # existing CSV, no --force


def test_integrate_prescribed_time(capsys):
    assert main(["integrate", "--objective", "quadratic-diag", "--diag", "1,4", "--flow", "gnf1",
                 "--p", "1.5", "--T", "2", "--x0", "1,1"]) == 0
    out = capsys.readouterr().out
    assert float(re.search(r"settling: (\S+)", out).group(1)) == pytest.approx(2.0, rel=0.01)


def test_validate_passes(capsys):
    assert main(["validate"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("[PASS]") for line in lines)


def test_resolve_gnf2(tmp_path, capsys):
    out_json = tmp_path / "verdicts.json"
    assert main(["resolve-gnf2", "--p-grid", "1,1.5", "--json", str(out_json)]) == 0
    assert "consistent winner: eq8-gnf2-derived" in capsys.readouterr().out
    assert json.loads(out_json.read_text())["winner"] == "eq8-gnf2-derived"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus"],
        ["integrate"],  # --x0 is required
        ["integrate", "--x0", "1,abc"],
        ["integrate", "--x0", "0,0", "--flow", "sideways"],
        ["run"],
        ["run", "/nonexistent/file.cfg"],
        ["integrate", "--x0", "0,0", "--p", "3"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage:" in capsys.readouterr().err


def test_help_lists_exactly_accepted_flags():
    for name, sub in _subparsers().items():
        accepted = {opt for a in sub._actions for opt in a.option_strings if opt.startswith("--")}
        shown = set(re.findall(r"(?<![\w-])--[A-Za-z][A-Za-z0-9-]*", sub.format_help()))
        assert shown == accepted, name


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["integrate", "--help"]) == 0
