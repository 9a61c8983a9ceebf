"""Self-checks run by ``fintime validate``."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .lyapunov import EnvelopeParams, envelope, envelope_value, oracle_batch, settling_time
from .objective import GRAD_FD_STEP, HESS_FD_STEP, SHIPPED, fd_validate

GRAD_TOL = 1e-4
HESS_TOL = 1e-3
# quadratics have exact central differences up to rounding
HESS_TOL_QUADRATIC = 1e-6
ENVELOPE_RTOL = 1e-4

ALPHAS = (-1.0, 0.0, 0.25, 0.5, 0.9, 1.0, 2.0)
GAINS = (0.5, 1.0, 3.0)
INITIAL_LEVELS = (0.1, 1.0, 10.0)

# sampling boxes for the derivative checks, per shipped objective
_BOXES = {
    "rosenbrock": (np.array([-2.0, -2.0]), np.array([4.0, 8.0])),
    "quadratic-identity": (np.full(2, -5.0), np.full(2, 5.0)),
    "quadratic-diag": (np.full(2, -5.0), np.full(2, 5.0)),
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def derivative_checks(n_points: int = 20, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    for name, make in SHIPPED.items():
        obj = make()
        lo, hi = _BOXES[name]
        worst_g = worst_h = 0.0
        for _ in range(n_points):
            x = rng.uniform(lo, hi)
            ge, _ = fd_validate(obj, x, GRAD_FD_STEP)
            _, he = fd_validate(obj, x, GRAD_FD_STEP, hess_h=HESS_FD_STEP)
            worst_g, worst_h = max(worst_g, ge), max(worst_h, he)
        hess_tol = HESS_TOL_QUADRATIC if name.startswith("quadratic") else HESS_TOL
        ok = worst_g <= GRAD_TOL and worst_h <= hess_tol
        checks.append(Check(f"derivatives {name}", ok, f"max grad err {worst_g:.2e}, max hess err {worst_h:.2e}"))
    return checks


def envelope_grid(n_times: int = 20, steps_per_interval: int = 5000):
    """Closed-form vs brute-force envelopes on the full parameter grid.

    Returns ``(params, t, exact, oracle)``; the sample times are interior:
    they stop at ``20/21`` of the settling time when it is finite and at three
    time constants otherwise.
    """
    params = [EnvelopeParams(e0, c, a) for a, c, e0 in product(ALPHAS, GAINS, INITIAL_LEVELS)]
    horizons = []
    for prm in params:
        if prm.alpha < 1:
            horizons.append(settling_time(prm) * n_times / (n_times + 1))
        else:
            horizons.append(3.0 * prm.E0 ** (1.0 - prm.alpha) / prm.c)
    n_steps = n_times * steps_per_interval
    t, approx = oracle_batch(params, np.array(horizons), n_steps, stride=steps_per_interval)
    exact = np.array([[envelope_value(prm, t[k, j]) for j, prm in enumerate(params)] for k in range(t.shape[0])])
    return params, t[1:], exact[1:], approx[1:]


def envelope_checks() -> list[Check]:
    params, _, exact, approx = envelope_grid()
    rel = np.abs(approx - exact) / np.abs(exact)
    worst = float(rel.max())
    zero_ok = all(envelope(p, settling_time(p)) == 0.0 for p in params if p.alpha < 1)
    return [
        Check("envelope vs oracle", worst <= ENVELOPE_RTOL, f"{len(params)} parameter sets, max rel err {worst:.2e}"),
        Check("envelope vanishes at settling time", zero_ok, "alpha < 1 cases"),
    ]


def run_all(n_points: int = 20, seed: int = 0) -> list[Check]:
    return derivative_checks(n_points, seed) + envelope_checks()
