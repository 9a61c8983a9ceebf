"""Right-hand sides of the generalized Newton-like flows and baseline flows.

GNF1::

    xdot = -c |g|^p  H^r g / (g^T H^(r+1) g)

GNF2::

    xdot = -c |g|_1^(p-1)  H^r s / (s^T H^(r+1) s),   s = sign(g)

with ``g`` the gradient and ``H`` the Hessian at ``x``. Along GNF1 the
Lyapunov function ``|g|^2`` obeys ``Vdot = -2c V^(p/2)``; along GNF2 the
function ``|g|_1`` obeys ``Vdot = -c V^(p-1)`` away from the hypersurfaces
where a gradient component vanishes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite, ZeroGradient
from .objective import Objective
from ._accel import kernel
from .symmat import _MAX_SWEEPS, EIG_FLOOR, EigenDecomp, SymMatrix, jacobi_eigh, sym_eig

GRAD_FLOOR = 1e-14
COMPONENT_FLOOR = 1e-14
DENOM_FLOOR = 1e-300


class Variant(str, enum.Enum):
    GNF1 = "gnf1"
    GNF2 = "gnf2"
    GRADIENT = "gradient"
    NEWTON = "newton"

    @property
    def is_finite_time(self) -> bool:
        return self in (Variant.GNF1, Variant.GNF2)


class Gnf2Law(str, enum.Enum):
    """Which closed form to trust for the GNF2 settling time."""

    DERIVED = "derived"  # |g0|_1^(2-p) / (c (2-p))
    ALTERNATIVE = "alternative"  # |g0|_1^p / (c p)


@dataclass(frozen=True)
class FlowConfig:
    variant: Variant = Variant.GNF1
    c: float = 1.0
    p: float = 1.0
    r: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.c > 0:
            raise ValueError(f"gain c must be positive, got {self.c}")
        if self.variant.is_finite_time and not (1.0 <= self.p < 2.0):
            raise ValueError(f"exponent p must lie in [1, 2), got {self.p}")

    def with_gain(self, c: float) -> "FlowConfig":
        return FlowConfig(self.variant, c, self.p, self.r)


def _spd_decomp(h: np.ndarray) -> EigenDecomp:
    eig = sym_eig(h)
    if eig.eigenvalues[0] <= EIG_FLOOR:
        raise NotPositiveDefinite(f"Hessian has smallest eigenvalue {eig.eigenvalues[0]:.3e}")
    return eig


_OK, _NOT_SPD, _DEGENERATE = 0, 1, 2


@kernel
def _direction_kernel(h, u, r, eig_floor, denom_floor):
    # H^r u / (u^T H^(r+1) u) via one Jacobi decomposition; loops avoid BLAS in nopython mode
    n = u.shape[0]
    a = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            a[i, j] = 0.5 * (h[i, j] + h[j, i])
    w, v = jacobi_eigh(a, _MAX_SWEEPS)
    out = np.zeros(n)
    if w[0] <= eig_floor:
        return out, w[0], _NOT_SPD
    scaled = np.empty(n)
    denom = 0.0
    for k in range(n):
        coord = 0.0
        for i in range(n):
            coord += v[i, k] * u[i]
        lam_r = w[k] ** r
        denom += w[k] * lam_r * coord * coord
        scaled[k] = lam_r * coord
    if not denom > denom_floor:
        return out, denom, _DEGENERATE
    for i in range(n):
        acc = 0.0
        for k in range(n):
            acc += v[i, k] * scaled[k]
        out[i] = acc / denom
    return out, denom, _OK


def _normalized_direction(h, u: np.ndarray, r: float) -> np.ndarray:
    """``H^r u / (u^T H^(r+1) u)`` for an SPD Hessian ``h``."""
    h = np.asarray(h, dtype=float)
    if h.shape != (u.shape[0], u.shape[0]) or not np.isfinite(h).all():
        h = SymMatrix(h).entries  # raises the matching DimensionError / InvalidMatrix
    d, value, status = _direction_kernel(h, u, float(r), EIG_FLOOR, DENOM_FLOOR)
    if status == _NOT_SPD:
        raise NotPositiveDefinite(f"Hessian has smallest eigenvalue {value:.3e}")
    if status == _DEGENERATE:
        raise ZeroGradient(f"quadratic form {value:.3e} vanished")
    return d


def gnf1_rhs(obj: Objective, cfg: FlowConfig, x, grad_floor: float = GRAD_FLOOR) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.asarray(obj.gradient(x), dtype=float)
    gnorm = math.sqrt(g @ g)
    if gnorm <= grad_floor:
        raise ZeroGradient(f"gradient norm {gnorm:.3e} at equilibrium")
    return -cfg.c * gnorm**cfg.p * _normalized_direction(obj.hessian(x), g, cfg.r)


def sign_vec(g, floor: float = COMPONENT_FLOOR) -> np.ndarray:
    """Componentwise sign with ``sign(0) = 0``; entries with ``|g_i| <= floor`` count as zero."""
    g = np.asarray(g, dtype=float)
    s = np.sign(g)
    s[np.abs(g) <= floor] = 0.0
    return s


def gnf2_rhs(obj: Objective, cfg: FlowConfig, x, signs=None, floor: float = COMPONENT_FLOOR) -> np.ndarray:
    """GNF2 velocity.

    ``signs`` overrides ``sign_vec(gradient(x))``; the integrator uses it to
    hold the sign pattern fixed within a step and to pin components that
    slide along a hypersurface ``g_i = 0``.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(obj.gradient(x), dtype=float)
    s = sign_vec(g, floor) if signs is None else np.asarray(signs, dtype=float)
    if not np.any(s) or np.all(np.abs(g) <= floor):
        raise ZeroGradient("all gradient components vanished")
    l1 = float(np.sum(np.abs(g)))
    return -cfg.c * l1 ** (cfg.p - 1.0) * _normalized_direction(obj.hessian(x), s, cfg.r)


def baseline_rhs(obj: Objective, cfg: FlowConfig, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.asarray(obj.gradient(x), dtype=float)
    if cfg.variant is Variant.GRADIENT:
        return -g
    if cfg.variant is Variant.NEWTON:
        eig = _spd_decomp(obj.hessian(x))
        return -(eig.basis @ ((eig.basis.T @ g) / eig.eigenvalues))
    raise ValueError(f"{cfg.variant} is not a baseline flow")


def flow_rhs(obj: Objective, cfg: FlowConfig, x, signs=None) -> np.ndarray:
    if cfg.variant is Variant.GNF1:
        return gnf1_rhs(obj, cfg, x)
    if cfg.variant is Variant.GNF2:
        return gnf2_rhs(obj, cfg, x, signs=signs)
    return baseline_rhs(obj, cfg, x)


def tune_c(obj: Objective, x0, p: float, variant, T: float, gnf2_law=Gnf2Law.DERIVED) -> float:
    """Gain that makes the flow settle at time ``T`` from ``x0``."""
    variant = Variant(variant)
    if not T > 0:
        raise ValueError("prescribed time must be positive")
    g = np.asarray(obj.gradient(np.asarray(x0, dtype=float)), dtype=float)
    if variant is Variant.GNF1:
        v0 = float(np.linalg.norm(g))
        if v0 <= GRAD_FLOOR:
            raise ZeroGradient("cannot tune the gain at a stationary point")
        return v0 ** (2.0 - p) / ((2.0 - p) * T)
    if variant is Variant.GNF2:
        v0 = float(np.sum(np.abs(g)))
        if v0 <= GRAD_FLOOR:
            raise ZeroGradient("cannot tune the gain at a stationary point")
        if Gnf2Law(gnf2_law) is Gnf2Law.ALTERNATIVE:
            return v0**p / (p * T)
        return v0 ** (2.0 - p) / ((2.0 - p) * T)
    raise ValueError(f"{variant} has no prescribed settling time")
