"""Lyapunov functions, the scalar finite-time envelope and settling-time predictions.

The envelope is the exact solution of ``E' = -c E^alpha`` with ``E(0) = E0``:

* ``alpha < 1``: ``E(t) = max(0, E0^(1-alpha) - c (1-alpha) t) ^ (1/(1-alpha))``,
  reaching zero at ``t* = E0^(1-alpha) / (c (1-alpha))``;
* ``alpha = 1``: ``E0 exp(-c t)``;
* ``alpha > 1``: ``(E0^(1-alpha) + c (alpha-1) t) ^ (-1/(alpha-1))``.

:func:`envelope_oracle` integrates the same scalar ODE by brute force and is
kept deliberately independent of the closed forms.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._accel import NUMBA_ENABLED, kernel
from .errors import AlphaOutOfRange, ZeroGradient
from .flows import GRAD_FLOOR, FlowConfig, Variant
from .objective import Objective


@dataclass(frozen=True)
class EnvelopeParams:
    E0: float
    c: float
    alpha: float

    def __post_init__(self):
        if not self.E0 > 0:
            raise ValueError(f"E0 must be positive, got {self.E0}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")


class Source(str, enum.Enum):
    LEMMA1 = "lemma1"
    EQ8_GNF1 = "eq8-gnf1"
    EQ8_GNF2_PAPER = "eq8-gnf2-paper"
    EQ8_GNF2_DERIVED = "eq8-gnf2-derived"


@dataclass(frozen=True)
class SettlingPrediction:
    t_star: float
    source: Source

    def residual_time(self, level: float, cfg: FlowConfig) -> float:
        """Time this law predicts is still needed once its Lyapunov quantity equals ``level``.

        Used to compare a measured first-passage time at the stopping
        threshold with the predicted time to reach zero.
        """
        c, p = cfg.c, cfg.p
        if self.source in (Source.EQ8_GNF1, Source.LEMMA1, Source.EQ8_GNF2_DERIVED):
            return level ** (2.0 - p) / (c * (2.0 - p))
        if self.source is Source.EQ8_GNF2_PAPER:
            return level**p / (c * p)
        raise ValueError(f"no residual law for {self.source}")


def v_grad_sq(obj: Objective, x) -> float:
    g = np.asarray(obj.gradient(np.asarray(x, dtype=float)))
    return float(g @ g)


def v_grad_l1(obj: Objective, x) -> float:
    return float(np.sum(np.abs(obj.gradient(np.asarray(x, dtype=float)))))


def settling_time(params: EnvelopeParams) -> float:
    a = params.alpha
    if a >= 1:
        return math.inf
    return params.E0 ** (1.0 - a) / (params.c * (1.0 - a))


def envelope(params: EnvelopeParams, t: float) -> float:
    a = params.alpha
    if a >= 1:
        raise AlphaOutOfRange(f"alpha={a} >= 1 has no finite settling time; use envelope_exp")
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t >= settling_time(params):
        return 0.0
    base = params.E0 ** (1.0 - a) - params.c * (1.0 - a) * t
    return max(base, 0.0) ** (1.0 / (1.0 - a))


def envelope_exp(params: EnvelopeParams, t: float) -> float:
    a = params.alpha
    if a < 1:
        raise AlphaOutOfRange(f"alpha={a} < 1 settles in finite time; use envelope")
    if a == 1:
        return params.E0 * math.exp(-params.c * t)
    return (params.E0 ** (1.0 - a) + params.c * (a - 1.0) * t) ** (-1.0 / (a - 1.0))


def envelope_value(params: EnvelopeParams, t: float) -> float:
    """:func:`envelope` or :func:`envelope_exp`, whichever applies."""
    return envelope(params, t) if params.alpha < 1 else envelope_exp(params, t)


@kernel
def _oracle_batch(E0, c, alpha, t_end, n_steps, stride):
    # classical RK4 on E' = -c max(E, 0)^alpha, one column per parameter set
    m = E0.shape[0]
    h = t_end / n_steps
    n_out = n_steps // stride + 1
    out = np.empty((n_out, m))
    for j in range(m):
        e = E0[j]
        cj = c[j]
        aj = alpha[j]
        out[0, j] = e
        row = 1
        for step in range(1, n_steps + 1):
            y = e
            k1 = -cj * y**aj if y > 0.0 else 0.0
            y = e + 0.5 * h * k1
            k2 = -cj * y**aj if y > 0.0 else 0.0
            y = e + 0.5 * h * k2
            k3 = -cj * y**aj if y > 0.0 else 0.0
            y = e + h * k3
            k4 = -cj * y**aj if y > 0.0 else 0.0
            e = e + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            if e < 0.0:
                e = 0.0
            if step % stride == 0:
                out[row, j] = e
                row += 1
    return out


def _oracle_batch_numpy(E0, c, alpha, t_end, n_steps, stride):
    h = t_end / n_steps
    out = np.empty((n_steps // stride + 1, E0.shape[0]))
    out[0] = E0

    def rate(y):
        pos = y > 0
        return np.where(pos, -c * np.where(pos, y, 1.0) ** alpha, 0.0)

    e = E0.copy()
    row = 1
    for step in range(1, n_steps + 1):
        k1 = rate(e)
        k2 = rate(e + 0.5 * h * k1)
        k3 = rate(e + 0.5 * h * k2)
        k4 = rate(e + h * k3)
        e = np.maximum(e + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0, 0.0)
        if step % stride == 0:
            out[row] = e
            row += 1
    return out


def oracle_batch(params_list, t_end, n_steps: int, stride: int = 1, use_numba: bool | None = None):
    """Brute-force envelopes for many parameter sets sharing one time grid.

    Returns ``(t, E)`` with ``E[k, j]`` the value for ``params_list[j]`` at ``t[k]``.
    ``t_end`` may be a scalar or one value per parameter set; in the latter
    case ``t`` has shape ``(n_out, m)``.
    """
    E0 = np.array([p.E0 for p in params_list], dtype=float)
    c = np.array([p.c for p in params_list], dtype=float)
    alpha = np.array([p.alpha for p in params_list], dtype=float)
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), E0.shape)
    if n_steps % stride:
        raise ValueError("n_steps must be a multiple of stride")
    fast = NUMBA_ENABLED if use_numba is None else use_numba
    # columns with different horizons are integrated separately, grouped by horizon
    out = np.empty((n_steps // stride + 1, E0.shape[0]))
    for horizon in np.unique(t_end):
        cols = np.flatnonzero(t_end == horizon)
        if fast:
            out[:, cols] = _oracle_batch(E0[cols], c[cols], alpha[cols], float(horizon), n_steps, stride)
        else:
            out[:, cols] = _oracle_batch_numpy(E0[cols], c[cols], alpha[cols], float(horizon), n_steps, stride)
    frac = np.arange(n_steps // stride + 1) * stride / n_steps
    t = np.outer(frac, t_end)
    if np.all(t_end == t_end[0]):
        t = t[:, 0]
    return t, out


def envelope_oracle(params: EnvelopeParams, t_end: float, n_steps: int = 100_000, stride: int = 1):
    """Sampled curve ``(t, E)`` from fixed-step RK4 integration of ``E' = -c E^alpha``."""
    t, e = oracle_batch([params], t_end, n_steps, stride)
    return t, e[:, 0]


def predicted_settling(obj: Objective, x0, cfg: FlowConfig) -> list[SettlingPrediction]:
    """Closed-form settling times of a GNF flow started at ``x0``.

    GNF1 gets one prediction. GNF2 gets both candidate laws, since only one
    of them can match the dynamics when ``p != 1``.
    """
    g = np.asarray(obj.gradient(np.asarray(x0, dtype=float)), dtype=float)
    c, p = cfg.c, cfg.p
    if cfg.variant is Variant.GNF1:
        v0 = float(np.linalg.norm(g))
        if v0 <= GRAD_FLOOR:
            raise ZeroGradient("no settling time at a stationary point")
        return [SettlingPrediction(v0 ** (2.0 - p) / (c * (2.0 - p)), Source.EQ8_GNF1)]
    if cfg.variant is Variant.GNF2:
        v0 = float(np.sum(np.abs(g)))
        if v0 <= GRAD_FLOOR:
            raise ZeroGradient("no settling time at a stationary point")
        return [
            SettlingPrediction(v0**p / (c * p), Source.EQ8_GNF2_PAPER),
            SettlingPrediction(v0 ** (2.0 - p) / (c * (2.0 - p)), Source.EQ8_GNF2_DERIVED),
        ]
    raise ValueError(f"{cfg.variant} does not settle in finite time")


def lemma1_gnf1(obj: Objective, x0, cfg: FlowConfig) -> SettlingPrediction:
    """GNF1 settling time from the generic envelope with ``V = |g|^2``, ``alpha = p/2``, gain ``2c``."""
    e0 = v_grad_sq(obj, x0)
    return SettlingPrediction(settling_time(EnvelopeParams(e0, 2.0 * cfg.c, cfg.p / 2.0)), Source.LEMMA1)
