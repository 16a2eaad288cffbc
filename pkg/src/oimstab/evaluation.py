"""Spurious-rate metrics and the experiment sweeps.

A spurious state is a non-desired binary point whose lambda_N(D) is strictly
below the worst (largest) desired lambda_N; such a state would be stable for
every K_s/K that stabilizes all desired patterns.  Each state and its global
flip count once.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from oimstab import io
from oimstab.landscape import EXHAUSTIVE_LIMIT, codes_of, enumerate_canonical, lambda_max_of_states
from oimstab.model import as_coupling, canonicalize_rows
from oimstab.sampler import GibbsConfig, make_rng, sample_chain
from oimstab.trainer import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalReport:
    n: int
    m: int
    r_s: float
    a: int
    b: int
    max_desired_lambda: float
    min_other_lambda: float | None
    ks_over_k_window: tuple[float, float] | None
    mode: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ks_over_k_window"] = list(self.ks_over_k_window) if self.ks_over_k_window else None
        return d


def _desired_codes(desired, n: int) -> np.ndarray:
    desired = np.atleast_2d(np.asarray(desired, dtype=np.int8))
    if desired.shape[1] != n:
        raise ValueError(f"dimension mismatch: patterns have length {desired.shape[1]}, N={n}")
    return np.unique(codes_of(desired))


def exact_spurious_rate(j, desired, limit: int = EXHAUSTIVE_LIMIT, landscape=None) -> EvalReport:
    """R_s = a / 2^(N-1) over all canonical binary states.

    ``landscape`` may pass a precomputed (H, lambda) enumeration.
    """
    j = as_coupling(j)
    n = j.shape[0]
    codes = _desired_codes(desired, n)
    _, lam = enumerate_canonical(j, limit=limit) if landscape is None else landscape
    total = lam.size
    threshold = float(lam[codes].max())
    other = np.ones(total, dtype=bool)
    other[codes] = False
    a = int(np.count_nonzero(lam[other] < threshold))
    min_other = float(lam[other].min()) if other.any() else None
    window = None
    if min_other is not None and threshold < min_other:
        window = (threshold / 2.0, min_other / 2.0)
    return EvalReport(n=n, m=int(codes.size), r_s=a / total, a=a, b=total,
                      max_desired_lambda=threshold, min_other_lambda=min_other,
                      ks_over_k_window=window, mode="exact")


def sampled_spurious_rate(j, desired, sample_count: int = 20000,
                          gibbs: GibbsConfig | None = None,
                          rng: np.random.Generator | None = None) -> EvalReport:
    """R_s = a / b where b counts the distinct canonical states of one Gibbs
    chain of ``sample_count`` records."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    j = as_coupling(j)
    n = j.shape[0]
    desired = canonicalize_rows(np.atleast_2d(desired))
    if desired.shape[1] != n:
        raise ValueError(f"dimension mismatch: patterns have length {desired.shape[1]}, N={n}")
    gibbs = GibbsConfig() if gibbs is None else gibbs
    cfg = GibbsConfig(n_samples=sample_count, burn_in_sweeps=gibbs.burn_in_sweeps,
                      sweeps_per_sample=gibbs.sweeps_per_sample, seed=gibbs.seed)
    samples = sample_chain(j, cfg, rng)
    threshold = float(lambda_max_of_states(j, desired).max())
    is_desired = (samples.distinct[:, None, :] == desired[None, :, :]).all(axis=2).any(axis=1)
    others = samples.distinct[~is_desired]
    lam = lambda_max_of_states(j, others) if others.shape[0] else np.empty(0)
    a = int(np.count_nonzero(lam < threshold))
    b = int(samples.distinct.shape[0])
    return EvalReport(n=n, m=int(desired.shape[0]), r_s=a / b, a=a, b=b,
                      max_desired_lambda=threshold,
                      min_other_lambda=float(lam.min()) if lam.size else None,
                      ks_over_k_window=None, mode="sampled")


def random_patterns(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` distinct canonical patterns drawn uniformly."""
    if m > 2 ** (n - 1):
        raise ValueError(f"cannot draw {m} distinct patterns for N={n}")
    chosen: list[np.ndarray] = []
    seen: set[bytes] = set()
    while len(chosen) < m:
        s = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
        s = s * s[0]
        key = s.tobytes()
        if key not in seen:
            seen.add(key)
            chosen.append(s)
    return np.stack(chosen)


def cell_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentSpec:
    """Grid and hyperparameters of one experiment (defaults follow experiment id)."""

    experiment: int
    n_values: list[int] = field(default_factory=list)
    m_values: list[int] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    iterations: int = 5000
    snapshots: list[int] = field(default_factory=list)
    learning_rate: float = 0.01
    n_samples: int = 500
    burn_in_sweeps: int = 10
    sweeps_per_sample: int = 1
    init_scale: float = 0.1
    eval_samples: int = 20000
    scatter: bool = True
    plots: bool = True

    @classmethod
    def defaults(cls, experiment: int, **overrides) -> "ExperimentSpec":
        if experiment == 1:
            base = dict(n_values=[20], m_values=[15], alphas=[0.8], iterations=2000,
                        snapshots=[1, 100, 300, 2000])
        elif experiment == 2:
            base = dict(n_values=[10, 15, 20, 25], m_values=[5, 10, 15, 20, 25, 30],
                        alphas=[0.0, 1.0], iterations=5000)
        elif experiment == 3:
            base = dict(n_values=list(range(20, 71, 5)), m_values=list(range(15, 71, 5)),
                        alphas=[1.0], iterations=5000)
        else:
            raise ValueError(f"unknown experiment id {experiment}")
        base.update({k: v for k, v in overrides.items() if v is not None})
        spec = cls(experiment=experiment, **base)
        if experiment == 1 and spec.iterations not in spec.snapshots:
            spec.snapshots = sorted(set(t for t in spec.snapshots if t <= spec.iterations) | {spec.iterations})
        return spec

    def gibbs(self, seed: int = 0) -> GibbsConfig:
        return GibbsConfig(n_samples=self.n_samples, burn_in_sweeps=self.burn_in_sweeps,
                           sweeps_per_sample=self.sweeps_per_sample, seed=seed)


RESULT_HEADER = ["experiment", "n", "m", "alpha", "seed", "iterations", "mode",
                 "r_s", "a", "b", "max_desired_lambda", "min_other_lambda", "train_seconds"]
SUMMARY_HEADER = ["experiment", "n", "m", "alpha", "iterations", "mode", "seeds", "r_s_mean", "r_s_std"]
SCATTER_HEADER = ["h", "lambda_max", "is_desired"]


def scatter_rows(j, desired, landscape=None, states=None):
    """Rows (h, lambda_max, is_desired), one per canonical state: all of them
    when ``states`` is None, otherwise the distinct canonical ``states``."""
    j = as_coupling(j)
    n = j.shape[0]
    if states is None:
        h, lam = enumerate_canonical(j) if landscape is None else landscape
        flag = np.zeros(lam.size, dtype=bool)
        flag[_desired_codes(desired, n)] = True
    else:
        canon = np.unique(canonicalize_rows(np.atleast_2d(states)), axis=0)
        desired = canonicalize_rows(np.atleast_2d(desired))
        sf = canon.astype(np.float64)
        h = -0.5 * np.einsum("ri,ij,rj->r", sf, j, sf)
        lam = lambda_max_of_states(j, canon)
        flag = (canon[:, None, :] == desired[None, :, :]).all(axis=2).any(axis=1)
    return h, lam, flag


def write_scatter(path, h, lam, flag) -> None:
    io.write_csv(path, SCATTER_HEADER, zip(h, lam, flag))


def _row(spec, n, m, alpha, seed, iterations, rep: EvalReport, secs):
    return [spec.experiment, n, m, alpha, seed, iterations, rep.mode, rep.r_s, rep.a, rep.b,
            rep.max_desired_lambda, "" if rep.min_other_lambda is None else rep.min_other_lambda,
            secs]


def _summarize(rows):
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r[0], r[1], r[2], r[3], r[5], r[6])
        groups.setdefault(key, []).append(float(r[7]))
    out = []
    for key, vals in groups.items():
        out.append([*key, len(vals), float(np.mean(vals)), float(np.std(vals))])
    return out


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None) -> dict:
    """Run the train+evaluate sweep for ``spec``.

    Returns ``{"rows": per-seed rows, "summary": per-cell rows, "scatter": {...}}``
    and, when ``out_dir`` is given, writes results.csv, summary.csv, scatter
    CSVs (experiment 1) and figures there.
    """
    out = Path(out_dir) if out_dir is not None else None
    rows: list[list] = []
    scatter: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for n in spec.n_values:
        for m in spec.m_values:
            for seed in spec.seeds:
                patterns = random_patterns(n, m, make_rng(cell_seed(spec.experiment, n, m, seed)))
                for alpha in spec.alphas:
                    cfg = TrainConfig(
                        desired_patterns=patterns, alpha=alpha, learning_rate=spec.learning_rate,
                        iterations=spec.iterations, gibbs=spec.gibbs(), init_scale=spec.init_scale,
                        seed=cell_seed(spec.experiment, n, m, seed, 1),
                    )
                    t0 = time.perf_counter()
                    tr = train(cfg, snapshot_at=spec.snapshots)
                    secs = time.perf_counter() - t0
                    log.info("exp%d N=%d m=%d alpha=%g seed=%d trained in %.1fs",
                             spec.experiment, n, m, alpha, seed, secs)
                    if spec.experiment == 3:
                        rep = sampled_spurious_rate(
                            tr.final_weights, patterns, spec.eval_samples, spec.gibbs(),
                            rng=make_rng(cell_seed(spec.experiment, n, m, seed, 2)))
                        rows.append(_row(spec, n, m, alpha, seed, len(tr.steps), rep, secs))
                        continue
                    snaps = tr.snapshots if spec.snapshots else {len(tr.steps): tr.final_weights}
                    for t_it, jw in sorted(snaps.items()):
                        land = enumerate_canonical(jw)
                        rep = exact_spurious_rate(jw, patterns, landscape=land)
                        rows.append(_row(spec, n, m, alpha, seed, t_it, rep, secs))
                        if spec.scatter and spec.experiment == 1:
                            scatter[(seed, t_it)] = scatter_rows(jw, patterns, landscape=land)
    summary = _summarize(rows)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        io.write_csv(out / "results.csv", RESULT_HEADER, rows)
        io.write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
        for (seed, t_it), (h, lam, flag) in sorted(scatter.items()):
            write_scatter(out / f"scatter_seed{seed}_T{t_it}.csv", h, lam, flag)
        if spec.plots:
            from oimstab import plotting

            plotting.render_experiment(spec, rows, scatter, out)
    return {"rows": rows, "summary": summary, "scatter": scatter}
