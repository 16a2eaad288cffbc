"""Core quantities of an oscillator Ising machine (OIM).

Spins are numpy integer arrays with entries in {+1, -1}; phases are float
arrays on the torus (-pi, pi].  Couplings are dense symmetric matrices with a
zero diagonal, wrapped by :class:`CouplingMatrix` when they cross a file or
API boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PHASE_TOL = 1e-3
SYMMETRY_TOL = 1e-12


class NotBinaryError(ValueError):
    """A phase vector is not close to a 0/pi configuration."""


@dataclass(frozen=True)
class MachineParams:
    """Coupling gain ``k_coupling`` (K) and SHIL gain ``k_shil`` (K_s)."""

    k_coupling: float = 1.0
    k_shil: float = 1.0

    def __post_init__(self):
        if not (self.k_coupling > 0 and self.k_shil > 0):
            raise ValueError(f"K and K_s must be positive, got K={self.k_coupling}, K_s={self.k_shil}")


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Symmetric, zero-diagonal coupling weights J (stored densely, read-only)."""

    j: np.ndarray

    def __post_init__(self):
        j = np.array(self.j, dtype=np.float64)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise ValueError(f"coupling matrix must be square, got shape {j.shape}")
        if j.shape[0] < 2:
            raise ValueError("coupling matrix needs at least 2 oscillators")
        if not np.all(np.isfinite(j)):
            raise ValueError("coupling matrix has non-finite entries")
        asym = np.max(np.abs(j - j.T))
        if asym > SYMMETRY_TOL:
            raise ValueError(f"coupling matrix is not symmetric (max |J - J^T| = {asym:.3e})")
        if np.any(np.diag(j) != 0.0):
            raise ValueError("coupling matrix must have a zero diagonal")
        j = 0.5 * (j + j.T)
        j.setflags(write=False)
        object.__setattr__(self, "j", j)

    @property
    def n(self) -> int:
        return self.j.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.j if dtype is None else self.j.astype(dtype)

    @classmethod
    def random(cls, n: int, scale: float, rng: np.random.Generator) -> "CouplingMatrix":
        """i.i.d. uniform entries on [-scale, scale], mirrored to the lower triangle."""
        upper = np.triu(rng.uniform(-scale, scale, size=(n, n)), k=1)
        return cls(upper + upper.T)

    def to_dict(self) -> dict:
        return {"n": self.n, "j": self.j.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "CouplingMatrix":
        try:
            n = int(payload["n"])
            j = np.asarray(payload["j"], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed weight payload: {exc}") from exc
        if j.shape != (n, n):
            raise ValueError(f"weight file declares n={n} but matrix has shape {j.shape}")
        return cls(j)

    def save(self, path: str | Path) -> None:
        from oimstab.io import atomic_write_text

        atomic_write_text(path, json.dumps(self.to_dict(), allow_nan=False))

    @classmethod
    def load(cls, path: str | Path) -> "CouplingMatrix":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def as_coupling(j) -> np.ndarray:
    """Return the raw float array behind ``j`` (a CouplingMatrix or array)."""
    if isinstance(j, CouplingMatrix):
        return j.j
    arr = np.asarray(j, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"coupling matrix must be square, got shape {arr.shape}")
    return arr


def as_spins(s, n: int | None = None) -> np.ndarray:
    s = np.asarray(s)
    if s.ndim != 1:
        raise ValueError(f"spin state must be a vector, got shape {s.shape}")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spin entries must be +1 or -1")
    if n is not None and s.shape[0] != n:
        raise ValueError(f"dimension mismatch: spins have length {s.shape[0]}, expected {n}")
    return s.astype(np.int8)


def _check_dims(j: np.ndarray, v: np.ndarray) -> None:
    if v.shape[-1] != j.shape[0]:
        raise ValueError(f"dimension mismatch: state length {v.shape[-1]} vs N={j.shape[0]}")


def hamiltonian(j, s) -> float:
    """Ising energy H(s) = -sum_{i<j} J_ij s_i s_j."""
    j = as_coupling(j)
    s = as_spins(s)
    _check_dims(j, s)
    sf = s.astype(np.float64)
    return float(-0.5 * sf @ j @ sf)


def oim_energy(j, theta, p: MachineParams) -> float:
    """Lyapunov energy of the phase dynamics (double sum over ordered pairs)."""
    j = as_coupling(j)
    theta = np.asarray(theta, dtype=np.float64)
    _check_dims(j, theta)
    c, sn = np.cos(theta), np.sin(theta)
    # cos(a - b) = cos a cos b + sin a sin b
    coupling = c @ j @ c + sn @ j @ sn
    return float(-p.k_coupling * coupling - p.k_shil * np.sum(np.cos(2.0 * theta)))


def build_d(j, s) -> np.ndarray:
    """Stability matrix D(s): off-diagonal J_ij s_i s_j, zero row sums."""
    j = as_coupling(j)
    s = as_spins(s)
    _check_dims(j, s)
    sf = s.astype(np.float64)
    d = j * np.outer(sf, sf)
    d[np.diag_indices_from(d)] = -d.sum(axis=1)
    return d


def build_a(j, s, p: MachineParams) -> np.ndarray:
    """Jacobian of the phase dynamics at the binary point for ``s``."""
    d = build_d(j, s)
    return p.k_coupling * d - 2.0 * p.k_shil * np.eye(d.shape[0])


def spins_to_phases(s) -> np.ndarray:
    s = as_spins(s)
    return np.where(s > 0, 0.0, np.pi)


def wrap_phases(theta) -> np.ndarray:
    """Map angles onto (-pi, pi]."""
    theta = np.asarray(theta, dtype=np.float64)
    w = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, np.pi, w)


def phases_to_spins(theta, tol: float = PHASE_TOL) -> np.ndarray:
    theta = wrap_phases(theta)
    dist_zero = np.abs(theta)
    dist_pi = np.pi - np.abs(theta)
    s = np.where(dist_zero <= dist_pi, 1, -1).astype(np.int8)
    worst = np.max(np.minimum(dist_zero, dist_pi))
    if worst > tol:
        raise NotBinaryError(f"phase vector is {worst:.3g} rad away from {{0, pi}} (tol {tol:g})")
    return s


def canonicalize(s) -> np.ndarray:
    """Representative of {s, -s} whose first spin is +1."""
    s = as_spins(s)
    return s if s[0] == 1 else -s


def canonicalize_rows(states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.int8)
    return states * states[:, :1]


def spins_from_code(code: int, n: int) -> np.ndarray:
    """Canonical state for an enumeration index: bit k-1 set means s_k = -1."""
    s = np.ones(n, dtype=np.int8)
    for k in range(1, n):
        if (code >> (k - 1)) & 1:
            s[k] = -1
    return s


def code_from_spins(s) -> int:
    s = canonicalize(s)
    code = 0
    for k in range(1, s.shape[0]):
        if s[k] == -1:
            code |= 1 << (k - 1)
    return code
