"""Objective functions with analytic derivatives, plus finite-difference checks."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, NotPositiveDefinite
from .symmat import SymMatrix, min_eigenvalue

GRAD_FD_STEP = 1e-5
HESS_FD_STEP = 1e-4


@dataclass(frozen=True)
class Objective:
    """A twice differentiable function ``R^dim -> R``.

    ``known_minimizer`` is only used for reporting distances and in tests.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    known_minimizer: Optional[np.ndarray] = None
    name: str = "objective"

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"{self.name} expects points of shape ({self.dim},), got {x.shape}")
        return x


@dataclass(frozen=True)
class RosenbrockParams:
    a: float = 1.0
    b: float = 100.0

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("Rosenbrock parameters must be finite")


def rosenbrock(params: RosenbrockParams) -> Objective:
    """``f(x1, x2) = (a - x1)**2 + b * (x2 - x1**2)**2``."""
    a, b = float(params.a), float(params.b)

    def value(x):
        return (a - x[0]) ** 2 + b * (x[1] - x[0] ** 2) ** 2

    def gradient(x):
        x1, x2 = x[0], x[1]
        w = x2 - x1 * x1
        return np.array([-2.0 * (a - x1) - 4.0 * b * x1 * w, 2.0 * b * w])

    def hessian(x):
        x1, x2 = x[0], x[1]
        h11 = 2.0 - 4.0 * b * x2 + 12.0 * b * x1 * x1
        h12 = -4.0 * b * x1
        return np.array([[h11, h12], [h12, 2.0 * b]])

    minimizer = np.array([a, a * a]) if b > 0 else None
    return Objective(2, value, gradient, hessian, minimizer, name=f"rosenbrock(a={a:g},b={b:g})")


class Stationary(str, enum.Enum):
    STRICT_GLOBAL_MIN = "strict-global-min"
    SADDLE = "saddle"
    NON_STRICT_MINIMA_LINE = "non-strict-minima-line"


def classify_stationary(params: RosenbrockParams) -> Stationary:
    """Nature of the stationary point ``(a, a**2)`` of the Rosenbrock function."""
    if params.b > 0:
        return Stationary.STRICT_GLOBAL_MIN
    if params.b < 0:
        return Stationary.SADDLE
    return Stationary.NON_STRICT_MINIMA_LINE


def quadratic(q, x_star) -> Objective:
    """``f(x) = 0.5 * (x - x_star)^T Q (x - x_star)`` for SPD ``Q``."""
    Q = SymMatrix.coerce(q)
    x_star = np.array(x_star, dtype=float)
    if x_star.shape != (Q.n,):
        raise DimensionError(f"minimizer of shape {x_star.shape} does not match Q of size {Q.n}")
    lam_min = min_eigenvalue(Q)
    if lam_min <= 0:
        raise NotPositiveDefinite(f"Q has smallest eigenvalue {lam_min:.3e}")
    Qa = Q.entries
    x_star.setflags(write=False)

    def value(x):
        d = np.asarray(x, dtype=float) - x_star
        return 0.5 * float(d @ Qa @ d)

    def gradient(x):
        return Qa @ (np.asarray(x, dtype=float) - x_star)

    def hessian(x):
        return Qa.copy()

    return Objective(Q.n, value, gradient, hessian, x_star, name=f"quadratic(n={Q.n})")


def fd_validate(obj: Objective, x, h: float = GRAD_FD_STEP, hess_h: float | None = None) -> tuple[float, float]:
    """Max-abs deviation of the analytic gradient and Hessian from central differences.

    The gradient is checked against differences of ``value`` with step ``h``;
    the Hessian against differences of ``gradient`` with step ``hess_h``
    (defaults to ``h``).
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    hh = h if hess_h is None else hess_h
    x = obj.check_point(x)
    n = obj.dim
    fd_grad = np.empty(n)
    fd_hess = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd_grad[i] = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
        e[i] = hh
        fd_hess[:, i] = (obj.gradient(x + e) - obj.gradient(x - e)) / (2 * hh)
    grad_err = float(np.max(np.abs(np.asarray(obj.gradient(x)) - fd_grad)))
    hess_err = float(np.max(np.abs(np.asarray(obj.hessian(x)) - fd_hess)))
    return grad_err, hess_err


SHIPPED = {
    "rosenbrock": lambda a=2.0, b=50.0: rosenbrock(RosenbrockParams(a, b)),
    "quadratic-identity": lambda dim=2: quadratic(np.eye(dim), np.zeros(dim)),
    "quadratic-diag": lambda diag=(1.0, 4.0): quadratic(np.diag(diag), np.zeros(len(diag))),
}
