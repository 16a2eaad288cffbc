"""Batched Hamiltonian / top-eigenvalue evaluation over sets of binary states.

Everything here loops over states with ``numba.prange``; the thread count is
whatever numba is configured with (see :func:`set_threads`).  Results are
written by index, so they do not depend on the thread count.
"""

from __future__ import annotations

import os

import numba as nb
import numpy as np

from oimstab.eigen import EigenError, jacobi_inplace, top_eigpair_inplace, max_diag
from oimstab.model import as_coupling

EXHAUSTIVE_LIMIT = 24
THREADS_ENV = "OIMSTAB_THREADS"


class OverLimitError(ValueError):
    """Exhaustive enumeration requested above the configured N limit."""


def set_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else nb.config.NUMBA_NUM_THREADS
    threads = max(1, min(int(threads), nb.config.NUMBA_NUM_THREADS))
    nb.set_num_threads(threads)
    return threads


@nb.njit(cache=True)
def fill_d(j, s, out):
    n = j.shape[0]
    for i in range(n):
        acc = 0.0
        for k in range(n):
            if k != i:
                x = j[i, k] * s[i] * s[k]
                out[i, k] = x
                acc += x
        out[i, i] = -acc


@nb.njit(cache=True)
def hamiltonian_of(j, s):
    n = j.shape[0]
    h = 0.0
    for i in range(n):
        for k in range(i + 1, n):
            h -= j[i, k] * s[i] * s[k]
    return h


@nb.njit(cache=True)
def _code_to_spins(code, s):
    s[0] = 1.0
    for k in range(1, s.shape[0]):
        s[k] = -1.0 if (code >> (k - 1)) & 1 else 1.0


@nb.njit(parallel=True, cache=True)
def _lambda_rows(j, states):
    m = states.shape[0]
    n = j.shape[0]
    lam = np.empty(m)
    bad = np.zeros(m, dtype=np.bool_)
    for r in nb.prange(m):
        d = np.empty((n, n))
        scratch = np.empty((1, 1))
        s = states[r].astype(np.float64)
        fill_d(j, s, d)
        if jacobi_inplace(d, scratch, False) < 0:
            bad[r] = True
        lam[r] = d[max_diag(d), max_diag(d)]
    return lam, bad


@nb.njit(parallel=True, cache=True)
def _enumerate(j, start, count):
    n = j.shape[0]
    h = np.empty(count)
    lam = np.empty(count)
    bad = np.zeros(count, dtype=np.bool_)
    for r in nb.prange(count):
        s = np.empty(n)
        d = np.empty((n, n))
        scratch = np.empty((1, 1))
        _code_to_spins(start + r, s)
        h[r] = hamiltonian_of(j, s)
        fill_d(j, s, d)
        if jacobi_inplace(d, scratch, False) < 0:
            bad[r] = True
        k = max_diag(d)
        lam[r] = d[k, k]
    return h, lam, bad


@nb.njit(cache=True)
def _top_pair_of_state(j, s):
    n = j.shape[0]
    d = np.empty((n, n))
    v = np.empty((n, n))
    fill_d(j, s, d)
    return top_eigpair_inplace(d, v)


def lambda_max_of_states(j, states) -> np.ndarray:
    """lambda_N(D(s)) for every row of ``states``."""
    j = as_coupling(j)
    states = np.ascontiguousarray(np.atleast_2d(states), dtype=np.int8)
    if states.shape[1] != j.shape[0]:
        raise ValueError(f"dimension mismatch: states have length {states.shape[1]}, N={j.shape[0]}")
    lam, bad = _lambda_rows(np.ascontiguousarray(j), states)
    if bad.any():
        raise EigenError("Jacobi iteration failed to converge for some states")
    return lam


def hamiltonians_of_states(j, states) -> np.ndarray:
    j = as_coupling(j)
    sf = np.atleast_2d(states).astype(np.float64)
    return -0.5 * np.einsum("ri,ij,rj->r", sf, j, sf)


def top_pair_of_state(j, s):
    """(lambda_N, unit eigenvector, eigengap) of D(s)."""
    j = np.ascontiguousarray(as_coupling(j))
    lam, vec, gap, sweeps = _top_pair_of_state(j, np.asarray(s, dtype=np.float64))
    if sweeps < 0:
        raise EigenError("Jacobi iteration failed to converge")
    return float(lam), vec, float(gap)


def enumerate_canonical(j, limit: int = EXHAUSTIVE_LIMIT, chunk: int = 1 << 18):
    """H(s) and lambda_N(D(s)) for all 2^(N-1) canonical states, indexed by code.

    Code c encodes s_1 = +1 and s_k = -1 iff bit k-2 of c is set.
    """
    j = np.ascontiguousarray(as_coupling(j))
    n = j.shape[0]
    if n > limit:
        raise OverLimitError(f"exhaustive enumeration limited to N <= {limit}, got N={n}")
    total = 1 << (n - 1)
    h = np.empty(total)
    lam = np.empty(total)
    for start in range(0, total, chunk):
        count = min(chunk, total - start)
        hc, lc, bad = _enumerate(j, start, count)
        if bad.any():
            raise EigenError("Jacobi iteration failed to converge during enumeration")
        h[start:start + count] = hc
        lam[start:start + count] = lc
    return h, lam


def all_canonical_states(n: int) -> np.ndarray:
    codes = np.arange(1 << (n - 1), dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n - 1)) & 1
    states = np.ones((codes.size, n), dtype=np.int8)
    states[:, 1:] = 1 - 2 * bits
    return states


def codes_of(states) -> np.ndarray:
    """Enumeration codes of the canonical forms of ``states`` (N <= 63)."""
    states = np.atleast_2d(np.asarray(states, dtype=np.int8))
    canon = states * states[:, :1]
    bits = (canon[:, 1:] == -1).astype(np.int64)
    return bits @ (np.int64(1) << np.arange(states.shape[1] - 1, dtype=np.int64))
