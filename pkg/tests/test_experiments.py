import json

import numpy as np
import pytest

from fintime.experiments import (
    ConfigError,
    ExperimentConfig,
    FIG1_POINTS,
    ObjectiveSpec,
    fig1_config,
    load_config,
    parse_config,
    read_trajectory_csv,
    resolve_gnf2_formula,
    run_experiment,
    summarize_resolution,
    worker_count,
    write_outputs,
    write_trajectory_csv,
)
from fintime.flows import FlowConfig
from fintime.integrator import IntegratorOptions, integrate
from fintime.objective import quadratic, rosenbrock, RosenbrockParams

CONFIG_TEXT = """
# quadratic sanity run
name = quad
objective = quadratic-identity
flow = gnf1
c = 2      # gain
p = 1
r = 0
x0 = 1.2,-1.6
x0 = 0,0
epsilon = 1e-9
t_max = 3
"""


def test_parse_config():
    cfg = parse_config(CONFIG_TEXT)
    assert cfg.name == "quad"
    assert cfg.flow == FlowConfig("gnf1", 2.0, 1.0, 0.0)
    assert cfg.initial_points == ((1.2, -1.6), (0.0, 0.0))
    assert cfg.options.t_max == 3.0 and cfg.options.stop_grad_norm == 1e-9
    assert cfg.T is None


@pytest.mark.parametrize(
    "text",
    [
        "objective = rosenbrock\n",  # no initial point
        "x0 = 1,2\nbogus = 3\n",
        "x0 = 1,2\nflow = gnf1\nflow = gnf2\n",
        "x0 = 1,a\n",
        "x0 = 1,2,3\n",
        "x0 = 1,2\nthis line has no equals\n",
        "x0 = 1,2\nflow = gnf1\np = 2.5\n",
    ],
)
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_shipped_fig1_config_matches_builtin(tmp_path):
    from pathlib import Path

    cfg = load_config(Path(__file__).parents[1] / "configs" / "fig1.cfg")
    builtin = fig1_config()
    assert cfg.initial_points == FIG1_POINTS == builtin.initial_points
    assert cfg.flow == builtin.flow and cfg.T == builtin.T == 1.0
    assert cfg.objective == builtin.objective


def test_run_experiment_quadratic():
    report, trajs = run_experiment(parse_config(CONFIG_TEXT), threads=1)
    first, second = report.runs
    assert first.termination == "converged"
    assert first.measured_settling == pytest.approx(1.0, abs=1e-3)
    assert {p["source"] for p in first.predictions} == {"eq8-gnf1", "lemma1"}
    assert all(p["relative_error"] <= 1e-6 for p in first.predictions)
    # start at the minimizer: converged at time zero, nothing to predict
    assert second.termination == "converged" and second.measured_settling == 0.0
    assert second.predictions == [] and len(trajs[1]) == 1


def test_relative_errors_recorded_for_every_source():
    text = CONFIG_TEXT.replace("flow = gnf1", "flow = gnf2").replace("p = 1", "p = 1.5").replace("x0 = 0,0\n", "")
    text = text.replace("x0 = 1.2,-1.6", "x0 = 1,-1").replace("t_max = 3", "t_max = 20")
    report, _ = run_experiment(parse_config(text), threads=1)
    [run] = report.runs
    by_source = {p["source"]: p for p in run.predictions}
    assert set(by_source) == {"eq8-gnf2-paper", "eq8-gnf2-derived"}
    for p in by_source.values():
        expected = abs(run.measured_settling + p["epsilon_correction"] - p["t_star"]) / p["t_star"]
        assert p["relative_error"] == expected


def test_failed_run_does_not_abort_others():
    cfg = fig1_config(initial_points=((0.0, 4.5), (0.0, 0.0)))
    report, trajs = run_experiment(cfg, threads=2)
    assert [r.termination for r in report.runs] == ["left_domain", "converged"]
    assert report.runs[1].measured_settling == pytest.approx(1.0, rel=0.02)


def test_fig1_prescribed_time():
    report, _ = run_experiment(fig1_config(), threads=1)
    for run in report.runs:
        assert run.termination == "converged"
        assert run.distance_to_minimizer <= 1e-6
        assert run.predictions[0]["relative_error"] <= 0.02
        assert run.grad_norm_nonincreasing


def test_report_is_deterministic_across_threading():
    a, _ = run_experiment(fig1_config(), threads=1)
    b, _ = run_experiment(fig1_config(), threads=4)
    c, _ = run_experiment(fig1_config(), threads=4)
    assert a.dumps() == b.dumps() == c.dumps()


def test_report_json_schema():
    report, _ = run_experiment(fig1_config(), threads=1)
    data = json.loads(report.dumps())
    assert set(data) == {"name", "objective", "flow", "prescribed_time", "epsilon", "runs"}
    run = data["runs"][0]
    for key in ("x0", "c", "termination", "measured_settling", "predictions", "final_x",
                "distance_to_minimizer", "grad_norm_nonincreasing", "distance_increased", "value_increased"):
        assert key in run
    assert set(run["predictions"][0]) == {"source", "t_star", "epsilon_correction", "relative_error", "raw_relative_error"}


def test_trajectory_csv_round_trip(tmp_path):
    traj = integrate(quadratic(np.eye(3), np.zeros(3)), FlowConfig("gnf1", 1.0, 1.2, 0.0), [0.3, -0.2, 0.5])
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    header = path.read_text().splitlines()[0]
    assert header == "t,x1,x2,x3,f,gnorm2,gnorm1,V"
    cols = read_trajectory_csv(path)
    np.testing.assert_array_equal(cols["t"], traj.t)
    np.testing.assert_array_equal(np.column_stack([cols["x1"], cols["x2"], cols["x3"]]), traj.x)
    for name, arr in (("f", traj.f), ("gnorm2", traj.grad_norm_2), ("gnorm1", traj.grad_norm_1), ("V", traj.V)):
        np.testing.assert_array_equal(cols[name], arr)


def test_write_outputs_refuses_overwrite(tmp_path):
    cfg = parse_config(CONFIG_TEXT)
    report, trajs = run_experiment(cfg, threads=1)
    out = tmp_path / "new" / "dir"
    written = write_outputs(cfg, report, trajs, out)
    assert [p.name for p in written] == ["quad_run0.csv", "quad_run1.csv", "quad_report.json"]
    with pytest.raises(FileExistsError):
        write_outputs(cfg, report, trajs, out)
    write_outputs(cfg, report, trajs, out, force=True)


def test_resolve_gnf2_formula_prefers_derived_law():
    q = quadratic(np.eye(2), np.zeros(2))
    verdicts = resolve_gnf2_formula(q, [1.0, -1.0], [1.0, 1.5, 1.9], c=1.0, r=0.0)
    control, mid, edge = verdicts
    assert set(control["within_tolerance"]) == {"eq8-gnf2-paper", "eq8-gnf2-derived"}
    assert control["winner"] is None
    assert mid["winner"] == "eq8-gnf2-derived"
    assert edge["termination"] == "converged"
    summary = summarize_resolution(verdicts)
    assert summary["consistent"] and summary["winner"] == "eq8-gnf2-derived"


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("FINTIME_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("FINTIME_THREADS", "junk")
    assert worker_count() >= 1
