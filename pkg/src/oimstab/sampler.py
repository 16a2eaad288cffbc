"""Hamiltonian Gibbs (heat-bath) sampling of Ising states.

Site k is set to +1 with probability 1 / (1 + exp(-2 h_k)), h_k = sum_j J_kj s_j,
sweeping k = 0..N-1 in index order.  The stationary law is exp(-H(s)) / Z at
unit inverse temperature.

Randomness comes from numpy's Philox4x64 counter-based generator: a chain
consumes, in order, N uniforms for the initial state and then N uniforms per
sweep.  Given the same seed the draws are identical on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from oimstab.model import as_coupling, as_spins


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class GibbsConfig:
    n_samples: int = 500
    burn_in_sweeps: int = 10
    sweeps_per_sample: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be >= 0")
        if self.sweeps_per_sample < 1:
            raise ValueError("sweeps_per_sample must be >= 1")


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Raw chain output plus its canonical deduplication.

    ``distinct`` holds canonical states (first spin +1) in a deterministic
    order, ``counts`` their multiplicities and ``inverse`` maps each raw
    state to its row in ``distinct``.
    """

    states: np.ndarray
    distinct: np.ndarray = field(init=False)
    counts: np.ndarray = field(init=False)
    inverse: np.ndarray = field(init=False)

    def __post_init__(self):
        states = np.ascontiguousarray(self.states, dtype=np.int8)
        if states.ndim != 2 or states.shape[0] == 0:
            raise ValueError("sample set must be a non-empty (n, N) array")
        canon = states * states[:, :1]
        packed = np.packbits(canon < 0, axis=1)
        _, first, inverse, counts = np.unique(
            packed, axis=0, return_index=True, return_inverse=True, return_counts=True
        )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "distinct", canon[first])
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "inverse", inverse.reshape(-1))

    def __len__(self):
        return self.states.shape[0]


@nb.njit(cache=True)
def _local_field(j, s, k):
    h = 0.0
    for i in range(s.shape[0]):
        h += j[k, i] * s[i]
    return h


@nb.njit(cache=True)
def _sweep(j, s, u):
    for k in range(s.shape[0]):
        p = 1.0 / (1.0 + np.exp(-2.0 * _local_field(j, s, k)))
        s[k] = 1.0 if u[k] < p else -1.0


@nb.njit(cache=True)
def _run_chain(j, s, uniforms, burn_in, spacing, n_samples):
    n = s.shape[0]
    out = np.empty((n_samples, n), dtype=np.int8)
    row = 0
    for b in range(burn_in):
        _sweep(j, s, uniforms[row])
        row += 1
    for r in range(n_samples):
        for _ in range(spacing):
            _sweep(j, s, uniforms[row])
            row += 1
        for k in range(n):
            out[r, k] = np.int8(s[k])
    return out


def flip_probability(j, s, k: int) -> float:
    """Probability that site k is +1 given all other spins of ``s``."""
    j = as_coupling(j)
    s = as_spins(s, j.shape[0])
    if not 0 <= k < j.shape[0]:
        raise IndexError(f"site index {k} out of range for N={j.shape[0]}")
    field_k = float(j[k] @ s.astype(np.float64))
    return float(1.0 / (1.0 + np.exp(-2.0 * field_k)))


def gibbs_sweep(j, s, rng: np.random.Generator) -> np.ndarray:
    """One sequential pass over all sites; returns the new state."""
    j = np.ascontiguousarray(as_coupling(j))
    state = as_spins(s, j.shape[0]).astype(np.float64)
    _sweep(j, state, rng.random(j.shape[0]))
    return state.astype(np.int8)


def sample_chain(j, cfg: GibbsConfig, rng: np.random.Generator | None = None,
                 chunk_sweeps: int = 1 << 16) -> SampleSet:
    """Run one chain from a uniformly random start.

    Burn-in sweeps are discarded, then one state is recorded after every
    ``sweeps_per_sample`` sweeps.  Uses ``rng`` when given, otherwise a fresh
    Philox generator seeded with ``cfg.seed``.
    """
    j = np.ascontiguousarray(as_coupling(j))
    n = j.shape[0]
    if rng is None:
        rng = make_rng(cfg.seed)
    s = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    if cfg.burn_in_sweeps:
        _run_chain(j, s, rng.random((cfg.burn_in_sweeps, n)), cfg.burn_in_sweeps, 1, 0)
    # bounded memory for very long chains: draw uniforms chunk by chunk
    per_chunk = max(1, chunk_sweeps // cfg.sweeps_per_sample)
    parts = []
    remaining = cfg.n_samples
    while remaining:
        take = min(per_chunk, remaining)
        u = rng.random((take * cfg.sweeps_per_sample, n))
        parts.append(_run_chain(j, s, u, 0, cfg.sweeps_per_sample, take))
        remaining -= take
    return SampleSet(np.concatenate(parts))


def empirical_distribution(samples: SampleSet) -> dict[tuple[int, ...], float]:
    """Frequency of each canonical state, keyed by its spin tuple."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    total = float(samples.counts.sum())
    return {tuple(int(x) for x in row): c / total for row, c in zip(samples.distinct, samples.counts)}


def boltzmann_canonical(j) -> tuple[np.ndarray, np.ndarray]:
    """Exact law over canonical states (s and -s merged), by enumeration."""
    from oimstab.landscape import all_canonical_states, hamiltonians_of_states

    j = as_coupling(j)
    states = all_canonical_states(j.shape[0])
    h = hamiltonians_of_states(j, states)
    w = np.exp(-(h - h.min()))
    return states, w / w.sum()
