"""Eigenvalue-contrast training of OIM couplings with an Ising-energy regularizer.

Each step draws a Gibbs sample set, picks the sampled non-desired state with
the smallest lambda_N(D) and the desired pattern with the largest, and moves J
along

    dJ_ij = -(vmin_i - vmin_j)^2 smin_i smin_j + (vmax_i - vmax_j)^2 smax_i smax_j
            + alpha * (<s_i s_j>_desired - <s_i s_j>_samples)

which raises the smallest non-desired top eigenvalue, lowers the worst desired
one, and pulls the Boltzmann law toward the desired patterns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from oimstab.landscape import (
    EXHAUSTIVE_LIMIT,
    OverLimitError,
    enumerate_canonical,
    lambda_max_of_states,
    top_pair_of_state,
)
from oimstab.model import CouplingMatrix, as_coupling, canonicalize_rows
from oimstab.sampler import GibbsConfig, SampleSet, make_rng, sample_chain
from oimstab.eigen import DEGENERACY_GAP

log = logging.getLogger(__name__)

TIE_RTOL = 1e-12


class NoNegativeCandidateError(RuntimeError):
    """Every sampled state was a desired pattern."""


@dataclass(frozen=True)
class TrainConfig:
    desired_patterns: np.ndarray
    alpha: float = 0.8
    learning_rate: float = 0.01
    iterations: int = 2000
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    init_scale: float = 0.1
    seed: int = 0
    stop_margin: float | None = None
    max_resample: int = 3

    def __post_init__(self):
        pats = np.atleast_2d(np.asarray(self.desired_patterns))
        if pats.size == 0 or not np.all((pats == 1) | (pats == -1)):
            raise ValueError("desired patterns must be a non-empty list of +/-1 vectors")
        pats = canonicalize_rows(pats)
        if np.unique(pats, axis=0).shape[0] != pats.shape[0]:
            raise ValueError("desired patterns must be distinct up to a global flip")
        if pats.shape[1] < 2:
            raise ValueError("need at least 2 oscillators")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")
        if self.stop_margin is not None and self.stop_margin < 0:
            raise ValueError("stop_margin must be >= 0")
        if self.max_resample < 0:
            raise ValueError("max_resample must be >= 0")
        pats.setflags(write=False)
        object.__setattr__(self, "desired_patterns", pats)

    @property
    def n(self) -> int:
        return self.desired_patterns.shape[1]

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        payload = dict(payload)
        gibbs = GibbsConfig(**payload.pop("gibbs", {}))
        if "desired_patterns" not in payload:
            raise ValueError("config needs 'desired_patterns'")
        payload["desired_patterns"] = np.asarray(payload["desired_patterns"])
        return cls(gibbs=gibbs, **payload)

    def to_dict(self) -> dict:
        return {
            "desired_patterns": self.desired_patterns.astype(int).tolist(),
            "alpha": self.alpha,
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "gibbs": {
                "n_samples": self.gibbs.n_samples,
                "burn_in_sweeps": self.gibbs.burn_in_sweeps,
                "sweeps_per_sample": self.gibbs.sweeps_per_sample,
                "seed": self.gibbs.seed,
            },
            "init_scale": self.init_scale,
            "seed": self.seed,
            "stop_margin": self.stop_margin,
            "max_resample": self.max_resample,
        }


@dataclass(frozen=True)
class StepTrace:
    iteration: int
    lambda_max_desired: float
    lambda_min_sampled: float
    objective_estimate: float
    grad_norm: float
    multiplicity_flag: bool


@dataclass
class TrainingTrace:
    steps: list[StepTrace]
    final_weights: CouplingMatrix
    snapshots: dict[int, CouplingMatrix] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Extremes:
    s_max: np.ndarray
    v_max: np.ndarray
    lambda_max: float
    s_min: np.ndarray
    v_min: np.ndarray
    lambda_min: float
    degenerate: bool


def eigen_grad_term(s, v) -> np.ndarray:
    """Entrywise d lambda_N(D(s)) / d J_ij = -(v_i - v_j)^2 s_i s_j for a unit
    top eigenvector ``v`` (J_ij and J_ji moved together)."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"eigenvector must have unit norm, got {norm}")
    s = np.asarray(s, dtype=np.float64)
    diff = v[:, None] - v[None, :]
    g = -(diff * diff) * np.outer(s, s)
    np.fill_diagonal(g, 0.0)
    return g


def correlation_matrix(states, weights=None) -> np.ndarray:
    """Mean of s_i s_j over the rows of ``states`` (optionally weighted)."""
    sf = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if sf.shape[0] == 0:
        raise ValueError("empty state list")
    if weights is None:
        c = sf.T @ sf / sf.shape[0]
    else:
        w = np.asarray(weights, dtype=np.float64)
        c = (sf * w[:, None]).T @ sf / w.sum()
    return 0.5 * (c + c.T)


def _pick(values: np.ndarray, best: float, rng: np.random.Generator) -> int:
    tol = TIE_RTOL * max(1.0, abs(best))
    ties = np.flatnonzero(np.abs(values - best) <= tol)
    if ties.size == 1:
        return int(ties[0])
    return int(ties[rng.integers(ties.size)])


def _desired_mask(distinct: np.ndarray, desired: np.ndarray) -> np.ndarray:
    """Rows of canonical ``distinct`` that are desired patterns."""
    return (distinct[:, None, :] == desired[None, :, :]).all(axis=2).any(axis=1)


def flip_neighbors(states: np.ndarray) -> np.ndarray:
    """Distinct canonical states one spin flip away from any row of ``states``."""
    states = np.atleast_2d(states)
    n = states.shape[1]
    flips = np.repeat(states[:, None, :], n, axis=1).copy()
    idx = np.arange(n)
    flips[:, idx, idx] *= -1
    return np.unique(canonicalize_rows(flips.reshape(-1, n)), axis=0)


def select_extremes(j, desired, samples: SampleSet, rng: np.random.Generator,
                    neighbor_fallback: bool = False) -> Extremes:
    """Worst desired pattern and best sampled non-desired state by lambda_N(D).

    Ties are broken uniformly at random.  Desired patterns (and their flips)
    are excluded from the argmin.  With ``neighbor_fallback``, a sample made
    only of desired patterns draws its candidates from their single-flip
    neighbours instead of raising.
    """
    j = as_coupling(j)
    desired = canonicalize_rows(desired)
    lam_d = lambda_max_of_states(j, desired)
    i_max = _pick(lam_d, lam_d.max(), rng)

    candidates = samples.distinct[~_desired_mask(samples.distinct, desired)]
    if candidates.shape[0] == 0 and neighbor_fallback:
        near = flip_neighbors(samples.distinct)
        candidates = near[~_desired_mask(near, desired)]
    if candidates.shape[0] == 0:
        raise NoNegativeCandidateError("all sampled states are desired patterns")
    lam_c = lambda_max_of_states(j, candidates)
    i_min = _pick(lam_c, lam_c.min(), rng)

    lmax, vmax, gmax = top_pair_of_state(j, desired[i_max])
    lmin, vmin, gmin = top_pair_of_state(j, candidates[i_min])
    return Extremes(
        s_max=desired[i_max], v_max=vmax, lambda_max=lmax,
        s_min=candidates[i_min], v_min=vmin, lambda_min=lmin,
        degenerate=bool(min(gmax, gmin) < DEGENERACY_GAP),
    )


def contrastive_step(j, cfg: TrainConfig, rng: np.random.Generator, iteration: int = 0,
               neighbor_fallback: bool = False):
    """One contrastive update; returns (J_next, StepTrace)."""
    j = as_coupling(j)
    samples = sample_chain(j, cfg.gibbs, rng)
    ext = select_extremes(j, cfg.desired_patterns, samples, rng, neighbor_fallback)

    delta = eigen_grad_term(ext.s_min, ext.v_min) - eigen_grad_term(ext.s_max, ext.v_max)
    if cfg.alpha:
        delta += cfg.alpha * (correlation_matrix(cfg.desired_patterns) - correlation_matrix(samples.states))
    np.fill_diagonal(delta, 0.0)
    delta = 0.5 * (delta + delta.T)

    j_next = j + cfg.learning_rate * delta
    np.fill_diagonal(j_next, 0.0)

    hits = _desired_mask(samples.distinct, cfg.desired_patterns)
    p_hat = samples.counts[hits].sum() / len(samples)
    trace = StepTrace(
        iteration=iteration,
        lambda_max_desired=ext.lambda_max,
        lambda_min_sampled=ext.lambda_min,
        objective_estimate=ext.lambda_min - ext.lambda_max + cfg.alpha * p_hat,
        grad_norm=float(np.linalg.norm(delta)),
        multiplicity_flag=ext.degenerate,
    )
    return j_next, trace


def initial_weights(cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    return CouplingMatrix.random(cfg.n, cfg.init_scale, rng).j.copy()


def train(cfg: TrainConfig, snapshot_at=(), progress_every: int = 0) -> TrainingTrace:
    """Run up to ``cfg.iterations`` contrastive steps from a random start.

    ``snapshot_at`` lists iteration counts after which a copy of J is kept
    (used for training-evolution plots).
    """
    rng = make_rng(cfg.seed)
    j = initial_weights(cfg, rng)
    steps: list[StepTrace] = []
    snapshots: dict[int, CouplingMatrix] = {}
    wanted = set(int(t) for t in snapshot_at)
    for it in range(1, cfg.iterations + 1):
        for attempt in range(cfg.max_resample + 1):
            try:
                # the last attempt may borrow candidates from flip neighbours
                j_next, st = contrastive_step(j, cfg, rng, iteration=it,
                                        neighbor_fallback=attempt == cfg.max_resample)
                break
            except NoNegativeCandidateError:
                if attempt == cfg.max_resample:
                    raise
                log.debug("iteration %d: no negative candidate, resampling", it)
        steps.append(st)
        stop = cfg.stop_margin is not None and st.lambda_max_desired + cfg.stop_margin < st.lambda_min_sampled
        if stop:
            # the state that met the margin is the one being evaluated
            if it in wanted:
                snapshots[it] = CouplingMatrix(j)
            break
        j = j_next
        if it in wanted:
            snapshots[it] = CouplingMatrix(j)
        if progress_every and it % progress_every == 0:
            log.info("iter %d: lambda_max_desired=%.4f lambda_min_sampled=%.4f",
                     it, st.lambda_max_desired, st.lambda_min_sampled)
    return TrainingTrace(steps=steps, final_weights=CouplingMatrix(j), snapshots=snapshots)


def exact_objective(j, desired, alpha: float, limit: int = EXHAUSTIVE_LIMIT) -> float:
    """Exhaustive value of the training objective: the eigenvalue contrast
    min_{non-desired} lambda_N - max_{desired} lambda_N plus alpha times the
    Boltzmann mass of the desired patterns (both signs counted)."""
    j = as_coupling(j)
    n = j.shape[0]
    if n > limit:
        raise OverLimitError(f"exact objective limited to N <= {limit}, got N={n}")
    from oimstab.landscape import codes_of

    h, lam = enumerate_canonical(j, limit=limit)
    codes = np.unique(codes_of(desired))
    other = np.ones(lam.size, dtype=bool)
    other[codes] = False
    contrast = (lam[other].min() if other.any() else np.inf) - lam[codes].max()
    # log-sum-exp over canonical states; each stands for two states of equal H
    shift = -h.min()
    z_half = np.exp(-h - shift).sum()
    p_mass = np.exp(-h[codes] - shift).sum() / z_half
    return float(contrast + alpha * p_mass)


def with_alpha(cfg: TrainConfig, alpha: float) -> TrainConfig:
    return replace(cfg, alpha=alpha)
