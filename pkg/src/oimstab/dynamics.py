"""Phase dynamics of the OIM and pattern retrieval.

    dtheta_i/dt = -K sum_j J_ij sin(theta_i - theta_j) - K_s sin(2 theta_i)

is a gradient flow (dtheta/dt = -grad E / 2), integrated here with fixed-step
classical RK4.  Phases are wrapped to (-pi, pi] after every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from oimstab.eigen import is_negative_definite
from oimstab.model import (
    MachineParams,
    NotBinaryError,
    as_coupling,
    as_spins,
    build_a,
    canonicalize,
    phases_to_spins,
    spins_to_phases,
)
from oimstab.sampler import make_rng


class DivergenceError(ArithmeticError):
    def __init__(self, step: int):
        super().__init__(f"non-finite phase state at step {step}")
        self.step = step


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    max_steps: int = 200_000
    convergence_tol: float = 1e-4
    perturbation_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.perturbation_scale < 0:
            raise ValueError("perturbation_scale must be >= 0")

    @staticmethod
    def rate_bound(j, p: MachineParams) -> float:
        j = as_coupling(j)
        return p.k_coupling * float(np.abs(j).sum(axis=1).max()) + 2.0 * p.k_shil

    @classmethod
    def for_system(cls, j, p: MachineParams, factor: float = 0.01, **kw) -> "IntegratorConfig":
        """Config with dt = factor / (K max_i sum_j |J_ij| + 2 K_s)."""
        return cls(dt=factor / cls.rate_bound(j, p), **kw)

    def validate(self, j, p: MachineParams) -> None:
        if not self.dt * self.rate_bound(j, p) < 1.0:
            raise ValueError(
                f"dt={self.dt} too large: dt * (K max_i sum_j |J_ij| + 2 K_s) must be < 1"
            )


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    phases: np.ndarray
    energies: np.ndarray
    converged: bool
    converged_to: np.ndarray | None

    @property
    def samples(self):
        return list(zip(self.times, self.phases, self.energies))


@nb.njit(cache=True)
def _rhs(j, theta, k, ks, out):
    n = theta.shape[0]
    c = np.cos(theta)
    s = np.sin(theta)
    for i in range(n):
        jc = 0.0
        js = 0.0
        for m in range(n):
            jc += j[i, m] * c[m]
            js += j[i, m] * s[m]
        # sum_j J_ij sin(t_i - t_j) = sin t_i (J cos t)_i - cos t_i (J sin t)_i
        out[i] = -k * (s[i] * jc - c[i] * js) - ks * 2.0 * s[i] * c[i]


@nb.njit(cache=True)
def _energy(j, theta, k, ks):
    c = np.cos(theta)
    s = np.sin(theta)
    n = theta.shape[0]
    acc = 0.0
    shil = 0.0
    for i in range(n):
        row = 0.0
        for m in range(n):
            row += j[i, m] * (c[i] * c[m] + s[i] * s[m])
        acc += row
        shil += c[i] * c[i] - s[i] * s[i]
    return -k * acc - ks * shil


@nb.njit(cache=True)
def _wrap(theta):
    two_pi = 2.0 * np.pi
    for i in range(theta.shape[0]):
        w = (theta[i] + np.pi) % two_pi - np.pi
        if w <= -np.pi:
            w = np.pi
        theta[i] = w


@nb.njit(cache=True)
def _near_binary(theta, tol):
    for i in range(theta.shape[0]):
        a = abs(theta[i])
        if min(a, np.pi - a) > tol:
            return False
    return True


@nb.njit(cache=True)
def _integrate(j, theta0, k, ks, dt, max_steps, tol, record):
    n = theta0.shape[0]
    theta = theta0.copy()
    _wrap(theta)
    rows = max_steps + 1 if record else 1
    traj = np.empty((rows, n))
    energy = np.empty(rows)
    traj[0] = theta
    energy[0] = _energy(j, theta, k, ks)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    _rhs(j, theta, k, ks, k1)
    vel_tol = tol / dt
    # status: 0 running/out of steps, 1 converged, 2 non-finite
    status = 0
    step = 0
    if np.max(np.abs(k1)) < vel_tol and _near_binary(theta, tol):
        status = 1
    while status == 0 and step < max_steps:
        for i in range(n):
            tmp[i] = theta[i] + 0.5 * dt * k1[i]
        _rhs(j, tmp, k, ks, k2)
        for i in range(n):
            tmp[i] = theta[i] + 0.5 * dt * k2[i]
        _rhs(j, tmp, k, ks, k3)
        for i in range(n):
            tmp[i] = theta[i] + dt * k3[i]
        _rhs(j, tmp, k, ks, k4)
        for i in range(n):
            theta[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        step += 1
        finite = True
        for i in range(n):
            if not np.isfinite(theta[i]):
                finite = False
        if not finite:
            status = 2
            break
        _wrap(theta)
        if record:
            traj[step] = theta
            energy[step] = _energy(j, theta, k, ks)
        _rhs(j, theta, k, ks, k1)
        if np.max(np.abs(k1)) < vel_tol and _near_binary(theta, tol):
            status = 1
    if not record:
        traj[0] = theta
        energy[0] = _energy(j, theta, k, ks)
        return theta, step, status, traj, energy
    return theta, step, status, traj[: step + 1], energy[: step + 1]


def rhs(j, theta, p: MachineParams) -> np.ndarray:
    """Phase velocity at ``theta``."""
    j = np.ascontiguousarray(as_coupling(j))
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (j.shape[0],):
        raise ValueError(f"dimension mismatch: theta has shape {theta.shape}, N={j.shape[0]}")
    out = np.empty_like(theta)
    _rhs(j, theta, p.k_coupling, p.k_shil, out)
    return out


def _run(j, theta0, p, cfg, record):
    j = np.ascontiguousarray(as_coupling(j))
    theta0 = np.asarray(theta0, dtype=np.float64)
    if theta0.shape != (j.shape[0],):
        raise ValueError(f"dimension mismatch: theta0 has shape {theta0.shape}, N={j.shape[0]}")
    cfg.validate(j, p)
    theta, steps, status, traj, energy = _integrate(
        j, theta0, p.k_coupling, p.k_shil, cfg.dt, cfg.max_steps, cfg.convergence_tol, record
    )
    if status == 2:
        raise DivergenceError(int(steps))
    spins = None
    if status == 1:
        try:
            spins = phases_to_spins(theta, tol=cfg.convergence_tol)
        except NotBinaryError:
            spins = None
    return theta, int(steps), spins, traj, energy


def integrate(j, theta0, p: MachineParams, cfg: IntegratorConfig) -> Trajectory:
    """Integrate from ``theta0`` until the state settles on a binary point or
    ``cfg.max_steps`` is reached; every step is recorded."""
    _, steps, spins, traj, energy = _run(j, theta0, p, cfg, record=True)
    times = cfg.dt * np.arange(steps + 1)
    return Trajectory(times=times, phases=traj, energies=energy,
                      converged=spins is not None, converged_to=spins)


def settle(j, theta0, p: MachineParams, cfg: IntegratorConfig) -> np.ndarray | None:
    """Binary state the flow settles on from ``theta0`` (None if it does not
    settle within max_steps).  Nothing but the end point is kept."""
    return _run(j, theta0, p, cfg, record=False)[2]


def analytic_stable(j, s, p: MachineParams) -> bool:
    """Stability of the binary point for ``s`` from the sign of its Jacobian."""
    return is_negative_definite(build_a(j, s, p))


@dataclass(frozen=True)
class ProbeResult:
    empirical_stable: bool
    analytic_stable: bool
    returned: int
    trials: int

    @property
    def agree(self) -> bool:
        return self.empirical_stable == self.analytic_stable


def stability_probe(j, s, p: MachineParams, cfg: IntegratorConfig, trials: int = 10,
                    rng: np.random.Generator | None = None) -> ProbeResult:
    """Perturb the binary point for ``s`` ``trials`` times and check that the
    flow returns; compared with the Jacobian criterion."""
    if not cfg.perturbation_scale > 0:
        raise ValueError("stability probing needs perturbation_scale > 0")
    j = as_coupling(j)
    s = as_spins(s, j.shape[0])
    rng = make_rng(cfg.seed) if rng is None else rng
    target = canonicalize(s)
    base = spins_to_phases(s)
    returned = 0
    for _ in range(trials):
        theta0 = base + rng.uniform(-cfg.perturbation_scale, cfg.perturbation_scale, size=base.shape)
        end = settle(j, theta0, p, cfg)
        if end is not None and np.array_equal(canonicalize(end), target):
            returned += 1
    return ProbeResult(
        empirical_stable=returned == trials,
        analytic_stable=analytic_stable(j, s, p),
        returned=returned,
        trials=trials,
    )


def retrieve(j, s_cue, flip_count: int, p: MachineParams, cfg: IntegratorConfig,
             rng: np.random.Generator) -> np.ndarray | None:
    """Corrupt ``flip_count`` spins of the cue, jitter the phases, and return the
    binary state the dynamics settles on (None if it does not settle)."""
    j = as_coupling(j)
    s = as_spins(s_cue, j.shape[0]).copy()
    if not 0 <= flip_count <= s.shape[0]:
        raise ValueError(f"flip_count must be in [0, {s.shape[0]}], got {flip_count}")
    if flip_count:
        s[rng.choice(s.shape[0], size=flip_count, replace=False)] *= -1
    theta0 = spins_to_phases(s)
    if cfg.perturbation_scale > 0:
        theta0 = theta0 + rng.uniform(-cfg.perturbation_scale, cfg.perturbation_scale, size=s.shape)
    return settle(j, theta0, p, cfg)
