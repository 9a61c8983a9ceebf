"""Adaptive Dormand-Prince integration of optimization flows.

The finite-time flows are not Lipschitz at the minimizer: they reach it at a
finite time and are undefined there. Integration therefore stops at a
gradient-norm threshold ``stop_grad_norm`` whose crossing time is localized
by bisection inside the last step. Two further safeguards keep the step
controller away from the singularity:

* for GNF flows each step is capped at ``timescale_fraction * V / |Vdot|``,
  a fraction of the remaining settling time, so a step never jumps past it;
* for GNF2 the sign pattern of the gradient is frozen inside each step.
  A component changing sign triggers an event: the crossing is localized,
  and the component is either pinned to zero (both sides push toward the
  surface, i.e. sliding) or flipped (the trajectory crosses).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LeftDomain, NotConverged, NotPositiveDefinite, StepUnderflow, ZeroGradient
from .flows import FlowConfig, Variant, flow_rhs, sign_vec
from .objective import Objective

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 6))
for _i, _row in enumerate([
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]):
    _A[_i, : len(_row)] = _row
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_BISECT_ITERS = 80


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    T_MAX_REACHED = "t_max_reached"
    LEFT_DOMAIN = "left_domain"
    STEP_UNDERFLOW = "step_underflow"
    MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 0.1
    stop_grad_norm: float = 1e-9
    t_max: float = 10.0
    max_steps: int = 10_000_000
    record_stride: int = 1
    timescale_fraction: float = 0.5

    def __post_init__(self):
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if not self.stop_grad_norm > 0:
            raise ValueError("stop_grad_norm must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass
class Trajectory:
    """Time-ordered samples of a flow.

    ``V`` is the flow's own Lyapunov function: ``|g|_1`` for GNF2 and
    ``|g|^2`` otherwise.
    """

    t: np.ndarray
    x: np.ndarray
    f: np.ndarray
    grad_norm_2: np.ndarray
    grad_norm_1: np.ndarray
    V: np.ndarray
    termination: Termination
    variant: Variant
    n_accepted: int = 0
    n_rejected: int = 0
    n_crossings: int = 0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    @property
    def stop_norm(self) -> np.ndarray:
        """The gradient norm the stopping event watches."""
        return self.grad_norm_1 if self.variant is Variant.GNF2 else self.grad_norm_2

    def __len__(self):
        return len(self.t)


@dataclass
class _Recorder:
    obj: Objective
    ts: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    fs: list = field(default_factory=list)
    g2: list = field(default_factory=list)
    g1: list = field(default_factory=list)

    def add(self, t, x, g):
        self.ts.append(t)
        self.xs.append(np.array(x))
        self.fs.append(float(self.obj.value(x)))
        self.g2.append(float(np.linalg.norm(g)))
        self.g1.append(float(np.sum(np.abs(g))))

    def build(self, variant, termination, **kw) -> Trajectory:
        g2 = np.array(self.g2)
        g1 = np.array(self.g1)
        v = g1 if variant is Variant.GNF2 else g2**2
        return Trajectory(
            np.array(self.ts),
            np.array(self.xs).reshape(len(self.ts), -1),
            np.array(self.fs),
            g2,
            g1,
            v,
            termination,
            variant,
            **kw,
        )


def _dp_step(rhs, x, k1, h):
    ks = np.empty((7, x.shape[0]))
    ks[0] = k1
    for i in range(1, 7):
        ks[i] = rhs(x + h * (_A[i, :i] @ ks[:i]))
    return x + h * (_B5 @ ks), h * (_E @ ks), ks[6]


def _lyapunov_timescale(obj, variant, x, g, xdot, signs):
    """``V / |Vdot|`` for the flow's Lyapunov function, or ``inf`` if not decreasing."""
    hx = np.asarray(obj.hessian(x))
    if variant is Variant.GNF2:
        v = float(np.sum(np.abs(g)))
        vdot = float(signs @ (hx @ xdot))
    else:
        v = float(g @ g)
        vdot = 2.0 * float(g @ (hx @ xdot))
    return v / -vdot if vdot < 0 else math.inf


def integrate(obj: Objective, cfg: FlowConfig, x0, opts: IntegratorOptions | None = None, strict: bool = False) -> Trajectory:
    """Integrate the flow selected by ``cfg`` from ``x0``.

    Failures (leaving the positive-definite region, step underflow, limits)
    are reported through ``Trajectory.termination``. With ``strict=True`` the
    first two raise :class:`LeftDomain` / :class:`StepUnderflow` instead.
    """
    opts = opts or IntegratorOptions()
    variant = cfg.variant
    eps = opts.stop_grad_norm
    x = obj.check_point(x0).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial point must be finite")

    gnf2 = variant is Variant.GNF2

    def stop_norm(g):
        return float(np.sum(np.abs(g))) if gnf2 else float(np.linalg.norm(g))

    rec = _Recorder(obj)
    t = 0.0
    g = np.asarray(obj.gradient(x), dtype=float)
    rec.add(t, x, g)
    counts = {"n_accepted": 0, "n_rejected": 0, "n_crossings": 0}

    def finish(term, message=""):
        if rec.ts[-1] != t:
            rec.add(t, x, g)
        if strict and term is Termination.LEFT_DOMAIN:
            raise LeftDomain(message)
        if strict and term is Termination.STEP_UNDERFLOW:
            raise StepUnderflow(message)
        return rec.build(variant, term, message=message, **counts)

    if stop_norm(g) <= eps:
        return finish(Termination.CONVERGED)

    signs = sign_vec(g) if gnf2 else None
    pinned = (signs == 0) if gnf2 else None

    def rhs(z):
        return flow_rhs(obj, cfg, z, signs=signs)

    try:
        k1 = rhs(x)
    except NotPositiveDefinite as exc:
        return finish(Termination.LEFT_DOMAIN, str(exc))
    except ZeroGradient:
        return finish(Termination.CONVERGED)

    h = opts.h_init
    since_record = 0
    while True:
        if counts["n_accepted"] >= opts.max_steps:
            return finish(Termination.MAX_STEPS)
        if t >= opts.t_max:
            return finish(Termination.T_MAX_REACHED)
        # h is the controller's proposal; h_step may be shortened further by
        # the settling-time cap, which is exempt from the h_min floor
        h = min(h, opts.h_max)
        h_step = min(h, opts.t_max - t)
        if variant.is_finite_time:
            tau = _lyapunov_timescale(obj, variant, x, g, k1, signs)
            h_step = min(h_step, opts.timescale_fraction * tau)

        try:
            x_new, err_vec, k_last = _dp_step(rhs, x, k1, h_step)
            bad = None
        except (ZeroGradient, NotPositiveDefinite) as exc:
            bad = exc
        if bad is not None:
            counts["n_rejected"] += 1
            h = 0.5 * h_step
            if h < opts.h_min:
                term = Termination.LEFT_DOMAIN if isinstance(bad, NotPositiveDefinite) else Termination.STEP_UNDERFLOW
                return finish(term, str(bad))
            continue

        scale = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if not np.isfinite(err):
            err = math.inf
        if err > 1.0:
            counts["n_rejected"] += 1
            h = h_step * (max(0.2, 0.9 * err**-0.2) if np.isfinite(err) else 0.2)
            if h < opts.h_min:
                return finish(Termination.STEP_UNDERFLOW, f"error control needs step below h_min at t={t:.6g}")
            continue

        g_new = np.asarray(obj.gradient(x_new), dtype=float)
        event = None  # (theta, kind, component)
        if stop_norm(g_new) <= eps:
            theta = _bisect(lambda th: stop_norm(obj.gradient(_substep(rhs, x, k1, th * h_step))) <= eps)
            event = (theta, "converged", -1)
        if gnf2:
            for i in np.flatnonzero(~pinned & (np.sign(g_new) != signs)):
                theta = _bisect(
                    lambda th, i=i: signs[i] * obj.gradient(_substep(rhs, x, k1, th * h_step))[i] <= 0.0
                )
                if event is None or theta < event[0]:
                    event = (theta, "crossing", i)

        h_taken = h_step
        if event is not None and event[0] < 1.0:
            h_taken = event[0] * h_step
            x_new = _substep(rhs, x, k1, h_taken)
            g_new = np.asarray(obj.gradient(x_new), dtype=float)

        t = t + h_taken
        x = x_new
        g = g_new
        counts["n_accepted"] += 1
        since_record += 1

        if event is not None and event[1] == "converged":
            rec.add(t, x, g)
            return finish(Termination.CONVERGED)

        if event is not None and event[1] == "crossing":
            counts["n_crossings"] += 1
            i = event[2]
            signs = signs.copy()
            pinned = pinned.copy()
            if _is_sliding(obj, cfg, x, signs, i):
                signs[i] = 0.0
                pinned[i] = True
            else:
                signs[i] = -signs[i]
            rec.add(t, x, g)
            since_record = 0
        elif since_record >= opts.record_stride:
            rec.add(t, x, g)
            since_record = 0

        if gnf2:
            released = pinned & (np.abs(g) > max(1e-6 * float(np.sum(np.abs(g))), eps))
            if np.any(released):
                signs = signs.copy()
                pinned = pinned & ~released
                signs[released] = np.sign(g[released])

        try:
            if event is None and not gnf2:
                k1 = k_last
            else:
                k1 = rhs(x)
        except NotPositiveDefinite as exc:
            return finish(Termination.LEFT_DOMAIN, str(exc))
        except ZeroGradient:
            return finish(Termination.CONVERGED)

        if event is None and h_step == h:
            h = h * min(5.0, max(0.2, 0.9 * (err if err > 0 else 1e-10) ** -0.2))


def _substep(rhs, x, k1, h):
    return _dp_step(rhs, x, k1, h)[0]


def _bisect(after):
    """Smallest step fraction in (0, 1] at which ``after`` holds, to within float resolution.

    ``after(1.0)`` is assumed true and ``after(0.0)`` false.
    """
    lo, hi = 0.0, 1.0
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        try:
            ok = after(mid)
        except ZeroGradient:
            ok = True
        if ok:
            hi = mid
        else:
            lo = mid
    return hi


def _is_sliding(obj, cfg, x, signs, i) -> bool:
    """Do the velocities on both sides of ``g_i = 0`` point toward the surface?"""
    hx = np.asarray(obj.hessian(x))
    rates = []
    for side in (1.0, -1.0):
        s = signs.copy()
        s[i] = side
        try:
            xdot = flow_rhs(obj, cfg, x, signs=s)
        except ZeroGradient:
            return True
        rates.append(float(hx[i] @ xdot))
    return rates[0] < 0.0 and rates[1] > 0.0


def measure_settling(traj: Trajectory, epsilon: float) -> float:
    """First time the stopping norm reaches ``epsilon``, linearly interpolated between samples."""
    if not traj.converged:
        raise NotConverged(f"trajectory terminated with {traj.termination.value}")
    norm = traj.stop_norm
    hits = np.flatnonzero(norm <= epsilon)
    if hits.size == 0:
        raise NotConverged(f"stopping norm never reached {epsilon:g}")
    k = int(hits[0])
    if k == 0:
        return float(traj.t[0])
    n0, n1 = norm[k - 1], norm[k]
    t0, t1 = traj.t[k - 1], traj.t[k]
    frac = (n0 - epsilon) / (n0 - n1) if n0 != n1 else 1.0
    return float(t0 + frac * (t1 - t0))
