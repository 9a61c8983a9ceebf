"""Dense symmetric linear algebra: eigendecomposition and matrix powers.

Everything here works on small dense matrices (the Hessians of the objectives
we integrate), so the eigensolver is a cyclic Jacobi iteration rather than a
LAPACK call. Jacobi gives orthonormal eigenvectors to working precision and,
combined with a fixed sort order and sign convention, bit-reproducible output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import kernel
from .errors import DimensionError, InvalidMatrix, NotPositiveDefinite

EIG_FLOOR = 1e-12

_MAX_SWEEPS = 64


@kernel
def jacobi_eigh(a, max_sweeps):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Returns ``(w, v)`` with ``w`` ascending and ``v`` orthonormal columns whose
    first non-negligible entry is nonnegative.
    """
    n = a.shape[0]
    A = a.copy()
    V = np.eye(n)
    fro2 = 0.0
    for i in range(n):
        for j in range(n):
            fro2 += A[i, j] * A[i, j]
    thresh = (2.2e-16 * 2.2e-16) * fro2
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += A[i, j] * A[i, j]
        if off <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                elif theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq

    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i]
    order = np.argsort(w, kind="mergesort")
    w_sorted = np.empty(n)
    v_sorted = np.empty((n, n))
    for jj in range(n):
        j = order[jj]
        w_sorted[jj] = w[j]
        flip = False
        for k in range(n):
            if abs(V[k, j]) > 1e-14:
                flip = V[k, j] < 0.0
                break
        for k in range(n):
            v_sorted[k, jj] = -V[k, j] if flip else V[k, j]
    return w_sorted, v_sorted


def _symmetrized(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise InvalidMatrix("matrix has non-finite entries")
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Symmetric matrix with read-only storage.

    Construction symmetrizes by averaging with the transpose, so
    ``entries[i, j] == entries[j, i]`` holds exactly.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = _symmetrized(self.entries)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __matmul__(self, other):
        return self.entries @ np.asarray(other)

    @classmethod
    def coerce(cls, m) -> "SymMatrix":
        return m if isinstance(m, cls) else cls(m)

    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls(np.eye(n))

    @classmethod
    def diag(cls, values) -> "SymMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))


@dataclass(frozen=True, eq=False)
class EigenDecomp:
    eigenvalues: np.ndarray
    basis: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T


def sym_eig(m) -> EigenDecomp:
    """Eigenvalues (ascending) and an orthonormal eigenbasis of a symmetric matrix."""
    # raw arrays skip the SymMatrix wrapper; this sits on the integrator's hot path
    a = m.entries if isinstance(m, SymMatrix) else _symmetrized(m)
    w, v = jacobi_eigh(np.ascontiguousarray(a), _MAX_SWEEPS)
    w.setflags(write=False)
    v.setflags(write=False)
    return EigenDecomp(w, v)


def _is_nonneg_integer(r: float) -> bool:
    return r >= 0 and float(r).is_integer()


def powered_eigenvalues(eig: EigenDecomp, r: float, floor: float = EIG_FLOOR) -> np.ndarray:
    """``lambda_i ** r``, refusing fractional/negative powers of non-positive eigenvalues."""
    w = eig.eigenvalues
    if _is_nonneg_integer(r):
        return np.power(w, r)
    if w[0] <= floor:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w[0]:.3e} is below {floor:g}; power {r} undefined"
        )
    return np.power(w, r)


def mat_power(m, r: float, floor: float = EIG_FLOOR) -> SymMatrix:
    eig = sym_eig(m)
    lam_r = powered_eigenvalues(eig, r, floor)
    v = eig.basis
    return SymMatrix((v * lam_r) @ v.T)


def apply_power(m, r: float, vec, floor: float = EIG_FLOOR, eig: EigenDecomp | None = None) -> np.ndarray:
    """Compute ``M**r @ vec`` without forming ``M**r``.

    Pass a precomputed ``eig`` to reuse one decomposition across several powers.
    """
    if eig is None:
        eig = sym_eig(m)
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (eig.basis.shape[0],):
        raise DimensionError(f"vector of shape {vec.shape} does not match matrix of size {eig.basis.shape[0]}")
    lam_r = powered_eigenvalues(eig, r, floor)
    v = eig.basis
    return v @ (lam_r * (v.T @ vec))


def min_eigenvalue(m) -> float:
    return float(sym_eig(m).eigenvalues[0])
