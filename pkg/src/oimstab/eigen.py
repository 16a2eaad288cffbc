"""Dense symmetric eigensolver by cyclic Jacobi rotations.

Kernels are compiled with numba so they can be called from the batched
enumeration loops in :mod:`oimstab.landscape`.  Eigenvectors follow a fixed
sign convention (largest-magnitude component positive, lowest index on ties)
so that traces are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

OFF_TOL = 1e-12
DEGENERACY_GAP = 1e-10
MAX_SWEEPS = 100


class EigenError(ArithmeticError):
    pass


@nb.njit(cache=True, error_model="numpy")
def jacobi_inplace(a, v, want_vectors):
    """Diagonalize symmetric ``a`` in place; accumulate rotations into ``v``.

    Sweeps run in row-cyclic order until the off-diagonal Frobenius norm
    drops to OFF_TOL * ||a||_F.  Returns the number of sweeps, or -1 if
    MAX_SWEEPS was exhausted.
    """
    n = a.shape[0]
    if want_vectors:
        for i in range(n):
            for k in range(n):
                v[i, k] = 1.0 if i == k else 0.0
    fro2 = 0.0
    for i in range(n):
        for k in range(n):
            fro2 += a[i, k] * a[i, k]
    target = (OFF_TOL * OFF_TOL) * fro2
    npairs = float(n * (n - 1))
    for sweep in range(MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        if off <= target:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # entries this small cannot keep the off-norm above target
                if apq * apq * npairs <= target:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app = a[p, p]
                aqq = a[q, q]
                for k in range(n):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                for k in range(n):
                    a[k, p] = a[p, k]
                    a[k, q] = a[q, k]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                if want_vectors:
                    for k in range(n):
                        vkp = v[k, p]
                        vkq = v[k, q]
                        v[k, p] = c * vkp - s * vkq
                        v[k, q] = s * vkp + c * vkq
    return -1


@nb.njit(cache=True)
def fix_sign(vec):
    best = 0
    for i in range(vec.shape[0]):
        if abs(vec[i]) > abs(vec[best]):
            best = i
    if vec[best] < 0.0:
        for i in range(vec.shape[0]):
            vec[i] = -vec[i]


@nb.njit(cache=True)
def max_diag(a):
    best = 0
    for i in range(1, a.shape[0]):
        if a[i, i] > a[best, best]:
            best = i
    return best


@nb.njit(cache=True)
def top_eigpair_inplace(a, v):
    """Largest eigenvalue of ``a`` (destroyed), its unit eigenvector, and the gap
    to the next eigenvalue.  ``v`` is scratch of the same shape."""
    n = a.shape[0]
    sweeps = jacobi_inplace(a, v, True)
    k = max_diag(a)
    lam = a[k, k]
    gap = np.inf
    for i in range(n):
        if i != k and lam - a[i, i] < gap:
            gap = lam - a[i, i]
    vec = v[:, k].copy()
    fix_sign(vec)
    return lam, vec, gap, sweeps


@nb.njit(cache=True)
def top_eigenvalue_inplace(a, scratch):
    sweeps = jacobi_inplace(a, scratch, False)
    k = max_diag(a)
    return a[k, k], sweeps


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray
    degenerate: bool = False


def _prepare(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return 0.5 * (m + m.T)


def symmetric_spectrum(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in ascending order and the matching orthonormal eigenvectors
    (as columns)."""
    a = _prepare(m)
    n = a.shape[0]
    v = np.empty((n, n))
    if jacobi_inplace(a, v, True) < 0:
        raise EigenError(f"Jacobi iteration did not converge in {MAX_SWEEPS} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    for k in range(n):
        col = v[:, k].copy()
        fix_sign(col)
        v[:, k] = col
    return w, v


def largest_eigpair(m) -> EigenPair:
    a = _prepare(m)
    v = np.empty_like(a)
    lam, vec, gap, sweeps = top_eigpair_inplace(a, v)
    if sweeps < 0:
        raise EigenError(f"Jacobi iteration did not converge in {MAX_SWEEPS} sweeps")
    return EigenPair(float(lam), vec, bool(gap < DEGENERACY_GAP))


def is_negative_definite(m, tol: float = 0.0) -> bool:
    """True iff the largest eigenvalue is below ``-tol``."""
    a = _prepare(m)
    lam, sweeps = top_eigenvalue_inplace(a, np.empty((1, 1)))
    if sweeps < 0:
        raise EigenError(f"Jacobi iteration did not converge in {MAX_SWEEPS} sweeps")
    return bool(lam < -tol)
