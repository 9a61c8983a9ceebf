"""Experiment orchestration: prescribed-time runs, settling reports, GNF2 law resolution.

Config files are flat ``key = value`` text, one entry per line::

    # comments start with '#'
    objective = rosenbrock      # rosenbrock | quadratic-identity | quadratic-diag
    a = 2
    b = 50
    flow = gnf1                 # gnf1 | gnf2 | gradient | newton
    p = 1
    r = -1
    T = 1                       # prescribed settling time; tunes c per start
    x0 = 0,0                    # repeat for several starts
    x0 = 4,0

Other keys: ``c`` (gain, used when ``T`` is absent), ``diag`` (comma list for
``quadratic-diag``), ``dim`` (for ``quadratic-identity``), ``gnf2_law``
(``derived`` | ``alternative``, used when tuning GNF2), ``name`` (output file
prefix) and the integrator options ``epsilon``, ``t_max``, ``rel_tol``,
``abs_tol``, ``h_init``, ``h_min``, ``h_max``, ``max_steps``,
``record_stride``, ``timescale_fraction``.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FintimeError
from .flows import FlowConfig, Gnf2Law, Variant, tune_c
from .integrator import IntegratorOptions, Termination, Trajectory, integrate, measure_settling
from .lyapunov import SettlingPrediction, lemma1_gnf1, predicted_settling
from .objective import SHIPPED, Objective

_OPTION_KEYS = {
    "epsilon": ("stop_grad_norm", float),
    "t_max": ("t_max", float),
    "rel_tol": ("rel_tol", float),
    "abs_tol": ("abs_tol", float),
    "h_init": ("h_init", float),
    "h_min": ("h_min", float),
    "h_max": ("h_max", float),
    "max_steps": ("max_steps", int),
    "record_stride": ("record_stride", int),
    "timescale_fraction": ("timescale_fraction", float),
}
_SCALAR_KEYS = {"objective", "a", "b", "diag", "dim", "flow", "c", "p", "r", "T", "gnf2_law", "name", "output_dir"}


class ConfigError(FintimeError, ValueError):
    pass


def parse_vector(text: str) -> np.ndarray:
    """Parse ``"1,-2.5,3"`` into a float vector."""
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"not a comma-separated vector of reals: {text!r}") from exc


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str = "rosenbrock"
    params: tuple = ()

    def build(self) -> Objective:
        if self.name not in SHIPPED:
            raise ConfigError(f"unknown objective {self.name!r}; choose from {sorted(SHIPPED)}")
        return SHIPPED[self.name](**dict(self.params))


@dataclass(frozen=True)
class ExperimentConfig:
    objective: ObjectiveSpec
    flow: FlowConfig
    initial_points: tuple
    T: float | None = None
    options: IntegratorOptions = field(default_factory=IntegratorOptions)
    gnf2_law: Gnf2Law = Gnf2Law.DERIVED
    name: str = "experiment"
    output_dir: str | None = None

    def __post_init__(self):
        if not self.initial_points:
            raise ConfigError("at least one initial point is required")
        dim = self.objective.build().dim
        for x0 in self.initial_points:
            if len(x0) != dim:
                raise ConfigError(f"initial point {tuple(x0)} does not have dimension {dim}")


def parse_config(text: str, name: str = "experiment") -> ExperimentConfig:
    entries: dict[str, str] = {}
    points = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "x0":
            points.append(tuple(parse_vector(value)))
        elif key in _SCALAR_KEYS or key in _OPTION_KEYS:
            if key in entries:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            entries[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    obj_name = entries.get("objective", "rosenbrock")
    if obj_name == "rosenbrock":
        params = (("a", float(entries.get("a", 2.0))), ("b", float(entries.get("b", 50.0))))
    elif obj_name == "quadratic-diag":
        params = (("diag", tuple(parse_vector(entries.get("diag", "1,4")))),)
    elif obj_name == "quadratic-identity":
        dim = int(entries.get("dim", len(points[0]) if points else 2))
        params = (("dim", dim),)
    else:
        raise ConfigError(f"unknown objective {obj_name!r}")

    try:
        flow = FlowConfig(
            Variant(entries.get("flow", "gnf1")),
            float(entries.get("c", 1.0)),
            float(entries.get("p", 1.0)),
            float(entries.get("r", 0.0)),
        )
        opt_kw = {_OPTION_KEYS[k][0]: _OPTION_KEYS[k][1](v) for k, v in entries.items() if k in _OPTION_KEYS}
        options = IntegratorOptions(**opt_kw)
        law = Gnf2Law(entries.get("gnf2_law", "derived"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    T = float(entries["T"]) if "T" in entries else None
    return ExperimentConfig(
        ObjectiveSpec(obj_name, params),
        flow,
        tuple(points),
        T,
        options,
        law,
        entries.get("name", name),
        entries.get("output_dir"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), name=path.stem)


@dataclass
class RunRecord:
    index: int
    x0: list
    c: float | None
    termination: str
    measured_settling: float | None
    predictions: list
    final_x: list
    distance_to_minimizer: float | None
    grad_norm_nonincreasing: bool | None
    distance_increased: bool | None
    value_increased: bool | None
    n_samples: int
    error: str = ""

    def to_json(self) -> dict:
        return {k: _clean(v) for k, v in self.__dict__.items()}


@dataclass
class SettlingReport:
    name: str
    objective: str
    flow: dict
    prescribed_time: float | None
    epsilon: float
    runs: list

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "objective": self.objective,
            "flow": self.flow,
            "prescribed_time": _clean(self.prescribed_time),
            "epsilon": self.epsilon,
            "runs": [r.to_json() for r in self.runs],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.floating,)):
        return _clean(float(v))
    if isinstance(v, np.ndarray):
        return [_clean(float(u)) for u in v]
    if isinstance(v, list):
        return [_clean(u) for u in v]
    if isinstance(v, dict):
        return {k: _clean(u) for k, u in v.items()}
    return v


def compare_prediction(pred: SettlingPrediction, measured: float, cfg: FlowConfig, epsilon: float) -> dict:
    """Relative error of a prediction against a first-passage time at ``epsilon``.

    The measured time is when the stopping norm hit ``epsilon``, not zero,
    so it is corrected by the time the prediction's own law still needs from
    that level (``epsilon / c`` for GNF1 with ``p = 1``).
    """
    residual = pred.residual_time(epsilon, cfg)
    return {
        "source": pred.source.value,
        "t_star": pred.t_star,
        "epsilon_correction": residual,
        "relative_error": abs(measured + residual - pred.t_star) / pred.t_star,
        "raw_relative_error": abs(measured - pred.t_star) / pred.t_star,
    }


def _predictions(obj, x0, cfg) -> list[SettlingPrediction]:
    if cfg.variant is Variant.GNF1:
        return predicted_settling(obj, x0, cfg) + [lemma1_gnf1(obj, x0, cfg)]
    if cfg.variant is Variant.GNF2:
        return predicted_settling(obj, x0, cfg)
    return []


def _single_run(obj: Objective, cfg: ExperimentConfig, index: int, x0) -> tuple[RunRecord, Trajectory | None]:
    x0 = np.asarray(x0, dtype=float)
    eps = cfg.options.stop_grad_norm
    flow = cfg.flow
    try:
        g0 = np.asarray(obj.gradient(x0))
        g0_norm = float(np.sum(np.abs(g0))) if flow.variant is Variant.GNF2 else float(np.linalg.norm(g0))
        if cfg.T is not None and flow.variant.is_finite_time and g0_norm > eps:
            flow = flow.with_gain(tune_c(obj, x0, flow.p, flow.variant, cfg.T, cfg.gnf2_law))
        traj = integrate(obj, flow, x0, cfg.options)
    except (FintimeError, ValueError) as exc:
        rec = RunRecord(index, x0.tolist(), None, "error", None, [], [], None, None, None, None, 0, str(exc))
        return rec, None

    measured = None
    comparisons = []
    if traj.converged:
        measured = measure_settling(traj, eps)
        if len(traj) > 1 and flow.variant.is_finite_time:
            comparisons = [compare_prediction(p, measured, flow, eps) for p in _predictions(obj, x0, flow)]

    xs = obj.known_minimizer
    dist = None if xs is None else float(np.linalg.norm(traj.x[-1] - xs))
    d_curve = None if xs is None else np.linalg.norm(traj.x - xs, axis=1)
    rec = RunRecord(
        index=index,
        x0=x0.tolist(),
        c=flow.c,
        termination=traj.termination.value,
        measured_settling=measured,
        predictions=comparisons,
        final_x=traj.x[-1].tolist(),
        distance_to_minimizer=dist,
        grad_norm_nonincreasing=bool(np.all(np.diff(traj.grad_norm_2) <= 1e-9)),
        distance_increased=None if d_curve is None else bool(np.any(np.diff(d_curve) > 0)),
        value_increased=bool(np.any(np.diff(traj.f) > 0)),
        n_samples=len(traj),
        error=traj.message,
    )
    return rec, traj


def worker_count() -> int:
    env = os.environ.get("FINTIME_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> tuple[SettlingReport, list]:
    """Integrate from every initial point and compare settling with all predictions.

    Failed runs are recorded in the report and do not abort the others.
    Results are ordered as the initial points, whatever the scheduling.
    """
    obj = cfg.objective.build()
    n = threads or worker_count()
    jobs = list(enumerate(cfg.initial_points))
    if n > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=min(n, len(jobs))) as pool:
            results = list(pool.map(lambda job: _single_run(obj, cfg, *job), jobs))
    else:
        results = [_single_run(obj, cfg, *job) for job in jobs]
    report = SettlingReport(
        name=cfg.name,
        objective=obj.name,
        flow={"variant": cfg.flow.variant.value, "c": cfg.flow.c, "p": cfg.flow.p, "r": cfg.flow.r},
        prescribed_time=cfg.T,
        epsilon=cfg.options.stop_grad_norm,
        runs=[r for r, _ in results],
    )
    return report, [t for _, t in results]


def resolve_gnf2_formula(
    obj: Objective,
    x0,
    p_grid,
    c: float = 1.0,
    r: float = 0.0,
    opts: IntegratorOptions | None = None,
    tol: float = 0.01,
) -> list[dict]:
    """Integrate GNF2 for each ``p`` and report which settling law matches.

    Each verdict lists every source's relative error and the sources within
    ``tol``. ``winner`` is set only when exactly one source is within ``tol``.
    """
    opts = opts or IntegratorOptions(t_max=100.0)
    verdicts = []
    for p in p_grid:
        cfg = FlowConfig(Variant.GNF2, c, float(p), r)
        traj = integrate(obj, cfg, x0, opts)
        verdict = {"p": float(p), "termination": traj.termination.value, "measured_settling": None,
                   "sources": [], "within_tolerance": [], "winner": None}
        if traj.converged:
            measured = measure_settling(traj, opts.stop_grad_norm)
            rows = [compare_prediction(pr, measured, cfg, opts.stop_grad_norm)
                    for pr in predicted_settling(obj, x0, cfg)]
            within = [row["source"] for row in rows if row["relative_error"] <= tol]
            verdict.update(measured_settling=measured, sources=rows, within_tolerance=within,
                           winner=within[0] if len(within) == 1 else None)
        verdicts.append(verdict)
    return verdicts


def summarize_resolution(verdicts: list[dict]) -> dict:
    """Common winner over the runs with ``p != 1`` (where the two laws differ)."""
    contested = [v for v in verdicts if v["p"] != 1.0]
    winners = {v["winner"] for v in contested}
    consistent = bool(contested) and len(winners) == 1 and None not in winners
    return {"winner": winners.pop() if consistent else None, "consistent": consistent, "verdicts": verdicts}


def write_trajectory_csv(traj: Trajectory, path) -> None:
    n = traj.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *(f"x{i + 1}" for i in range(n)), "f", "gnorm2", "gnorm1", "V"])
        for k in range(len(traj)):
            row = [traj.t[k], *traj.x[k], traj.f[k], traj.grad_norm_2[k], traj.grad_norm_1[k], traj.V[k]]
            w.writerow([f"{float(v):.17g}" for v in row])


def read_trajectory_csv(path) -> dict:
    """Load a trajectory CSV into a dict of column arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return {name: body[:, i] for i, name in enumerate(header)}


def output_paths(cfg: ExperimentConfig, out_dir) -> tuple[list[Path], Path]:
    out_dir = Path(out_dir)
    csvs = [out_dir / f"{cfg.name}_run{k}.csv" for k in range(len(cfg.initial_points))]
    return csvs, out_dir / f"{cfg.name}_report.json"


def write_outputs(cfg: ExperimentConfig, report: SettlingReport, trajectories, out_dir, force: bool = False) -> list[Path]:
    csvs, report_path = output_paths(cfg, out_dir)
    targets = [p for p, tr in zip(csvs, trajectories) if tr is not None] + [report_path]
    existing = [p for p in targets if p.exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {existing[0]} (use --force)")
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    for path, traj in zip(csvs, trajectories):
        if traj is not None:
            write_trajectory_csv(traj, path)
    report_path.write_text(report.dumps())
    return targets


FIG1_POINTS = ((0.0, 0.0), (4.0, 0.0), (3.0, 1.0), (1.0, -2.0))


def fig1_config(**overrides) -> ExperimentConfig:
    """Rosenbrock(2, 50), GNF1 with (p, r) = (1, -1), gain tuned for settling at t = 1."""
    cfg = ExperimentConfig(
        ObjectiveSpec("rosenbrock", (("a", 2.0), ("b", 50.0))),
        FlowConfig(Variant.GNF1, 1.0, 1.0, -1.0),
        FIG1_POINTS,
        T=1.0,
        options=IntegratorOptions(t_max=2.0),
        name="fig1",
    )
    return replace(cfg, **overrides) if overrides else cfg
