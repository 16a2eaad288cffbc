"""Command-line entry point: ``oimstab <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
Every run writes ``manifest.json`` (config, versions, seed, wall time) into
its output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from oimstab import __version__, io
from oimstab.dynamics import DivergenceError, IntegratorConfig, integrate
from oimstab.eigen import EigenError
from oimstab.landscape import OverLimitError, hamiltonians_of_states, lambda_max_of_states, set_threads
from oimstab.model import CouplingMatrix, MachineParams, as_spins, spins_to_phases
from oimstab.sampler import GibbsConfig, make_rng, sample_chain
from oimstab.trainer import NoNegativeCandidateError, TrainConfig, train

log = logging.getLogger("oimstab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


def _existing(path: str) -> Path:
    p = Path(path).resolve()
    if not p.is_file():
        raise ConfigError(f"file not found: {p}")
    return p


def _load_json(path: str):
    p = _existing(path)
    try:
        with open(p) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc


def _load_weights(path: str) -> CouplingMatrix:
    p = _existing(path)
    try:
        return CouplingMatrix.load(p)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def _load_patterns(path: str) -> np.ndarray:
    p = _existing(path)
    try:
        return io.load_patterns(p)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from exc


def _versions() -> dict:
    import matplotlib
    import numba

    return {"oimstab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "numba": numba.__version__, "matplotlib": matplotlib.__version__}


def _write_manifest(out_dir: Path, command: str, config: dict, seed, threads: int, started: float):
    io.write_json(out_dir / "manifest.json", {
        "command": command,
        "config": config,
        "seed": seed,
        "threads": threads,
        "versions": _versions(),
        "wall_seconds": round(time.perf_counter() - started, 3),
    })


# ------------------------------------------------------------------ commands

def _train_config(payload: dict, seed_override) -> TrainConfig:
    payload = dict(payload)
    if "desired_patterns" not in payload and "random_patterns" in payload:
        from oimstab.evaluation import random_patterns

        spec = payload.pop("random_patterns")
        payload["desired_patterns"] = random_patterns(
            int(spec["n"]), int(spec["m"]), make_rng(int(spec.get("seed", 0)))).tolist()
    if seed_override is not None:
        payload["seed"] = seed_override
    try:
        return TrainConfig.from_dict(payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid train config: {exc}") from exc


def cmd_train(args, out_dir: Path):
    cfg = _train_config(_load_json(args.config), args.seed)
    tr = train(cfg, progress_every=args.progress)
    tr.final_weights.save(out_dir / "weights.json")
    io.write_csv(out_dir / "trace.csv",
                 ["iter", "lambda_max_desired", "lambda_min_sampled", "objective_estimate", "grad_norm"],
                 [(s.iteration, s.lambda_max_desired, s.lambda_min_sampled, s.objective_estimate, s.grad_norm)
                  for s in tr.steps])
    io.write_json(out_dir / "patterns.json", cfg.desired_patterns.astype(int).tolist())
    print(f"trained {len(tr.steps)} iterations; weights -> {out_dir / 'weights.json'}")
    return cfg.to_dict(), cfg.seed


def cmd_eval(args, out_dir: Path):
    from oimstab.evaluation import exact_spurious_rate, sampled_spurious_rate

    j = _load_weights(args.weights)
    pats = _load_patterns(args.patterns)
    if args.mode == "exact":
        rep = exact_spurious_rate(j, pats)
    else:
        gibbs = GibbsConfig(n_samples=1, burn_in_sweeps=args.burn_in, sweeps_per_sample=args.spacing,
                            seed=args.seed or 0)
        rep = sampled_spurious_rate(j, pats, args.samples, gibbs)
    payload = rep.to_dict()
    io.write_json(out_dir / "eval_report.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return {"weights": args.weights, "patterns": args.patterns, "mode": args.mode,
            "samples": args.samples}, args.seed


def cmd_sample(args, out_dir: Path):
    j = _load_weights(args.weights)
    cfg = GibbsConfig(n_samples=args.n_samples, burn_in_sweeps=args.burn_in,
                      sweeps_per_sample=args.spacing, seed=args.seed or 0)
    samples = sample_chain(j, cfg)
    h = hamiltonians_of_states(j, samples.states)
    lam_distinct = lambda_max_of_states(j, samples.distinct)
    lam = lam_distinct[samples.inverse]
    lines = "".join(
        json.dumps({"spins": s.astype(int).tolist(), "h": float(hv), "lambda_max": float(lv)}) + "\n"
        for s, hv, lv in zip(samples.states, h, lam)
    )
    target = out_dir / "samples.jsonl"
    io.atomic_write_text(target, lines)
    if args.stdout:
        sys.stdout.write(lines)
    else:
        print(f"{len(samples)} samples ({samples.distinct.shape[0]} distinct) -> {target}")
    return {"weights": args.weights, "gibbs": vars(cfg)}, cfg.seed


def _parse_cue(text: str, n: int) -> np.ndarray:
    p = Path(text)
    if p.is_file():
        data = json.loads(p.read_text())
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cue must be a JSON list of +/-1 or a file path: {text!r}") from exc
    try:
        return as_spins(np.asarray(data), n)
    except ValueError as exc:
        raise ConfigError(f"invalid cue: {exc}") from exc


def cmd_simulate(args, out_dir: Path):
    j = _load_weights(args.weights)
    cue = _parse_cue(args.cue, j.n)
    try:
        p = MachineParams(args.k, args.ks)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = make_rng(args.seed or 0)
    s = cue.copy()
    if args.flip_count:
        s[rng.choice(j.n, size=args.flip_count, replace=False)] *= -1
    theta0 = spins_to_phases(s) + rng.uniform(-args.jitter, args.jitter, size=j.n)
    dt = args.dt if args.dt else 0.01 / IntegratorConfig.rate_bound(j, p)
    try:
        cfg = IntegratorConfig(dt=dt, max_steps=args.max_steps, convergence_tol=args.tol,
                               perturbation_scale=args.jitter, seed=args.seed or 0)
        cfg.validate(j, p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    traj = integrate(j, theta0, p, cfg)
    every = max(1, args.every)
    idx = np.arange(0, traj.times.size, every)
    if idx[-1] != traj.times.size - 1:
        idx = np.append(idx, traj.times.size - 1)
    header = ["t"] + [f"theta_{i + 1}" for i in range(j.n)] + ["E"]
    io.write_csv(out_dir / "trajectory.csv", header,
                 ([traj.times[i], *traj.phases[i], traj.energies[i]] for i in idx))
    summary = {"converged": traj.converged, "steps": int(traj.times.size - 1),
               "converged_to": None if traj.converged_to is None else traj.converged_to.astype(int).tolist()}
    io.write_json(out_dir / "simulation.json", summary)
    print(json.dumps(summary))
    return {"weights": args.weights, "cue": cue.astype(int).tolist(), "k": args.k, "ks": args.ks,
            "dt": dt, "max_steps": args.max_steps, "flip_count": args.flip_count,
            "jitter": args.jitter}, args.seed


def cmd_verify_bounds(args, out_dir: Path):
    from oimstab.bounds import verify_bounds

    if args.weights:
        j = _load_weights(args.weights)
    elif args.random_n:
        j = CouplingMatrix.random(args.random_n, args.scale, make_rng(args.seed or 0))
    else:
        raise ConfigError("verify-bounds needs --weights or --random-n")
    states = None
    if args.mode == "analytic-bound":
        states = sample_chain(j, GibbsConfig(n_samples=args.samples, seed=args.seed or 0)).distinct
    rep = verify_bounds(j, mode=args.mode, states=states)
    payload = rep.to_dict()
    io.write_json(out_dir / "bounds_report.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return {"weights": args.weights, "random_n": args.random_n, "scale": args.scale,
            "mode": args.mode}, args.seed


def cmd_scatter(args, out_dir: Path):
    from oimstab.evaluation import scatter_rows, write_scatter

    j = _load_weights(args.weights)
    pats = _load_patterns(args.patterns)
    states = None
    if args.sampled:
        states = sample_chain(j, GibbsConfig(n_samples=args.sampled, seed=args.seed or 0)).states
    h, lam, flag = scatter_rows(j, pats, states=states)
    write_scatter(out_dir / "scatter.csv", h, lam, flag)
    print(f"{h.size} rows -> {out_dir / 'scatter.csv'}")
    return {"weights": args.weights, "patterns": args.patterns, "sampled": args.sampled}, args.seed


def cmd_experiment(args, out_dir: Path):
    from oimstab.evaluation import ExperimentSpec, run_experiment

    try:
        spec = ExperimentSpec.defaults(
            args.id, n_values=args.n, m_values=args.m, alphas=args.alpha, seeds=args.seeds,
            iterations=args.iterations, eval_samples=args.eval_samples, n_samples=args.n_samples,
            snapshots=args.snapshots, init_scale=args.init_scale)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    spec.plots = not args.no_plots
    spec.scatter = not args.no_scatter
    res = run_experiment(spec, out_dir)
    for row in res["summary"]:
        print(",".join(io._cell(v) for v in row))
    return vars(spec), spec.seeds


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=".", help="directory for outputs and manifest")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for enumeration (default: $OIMSTAB_THREADS or all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="oimstab", description="Train and analyse OIM couplings.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train couplings from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--progress", type=int, default=0, help="log every N iterations")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="spurious-rate report for trained weights")
    p.add_argument("--weights", required=True)
    p.add_argument("--patterns", required=True)
    p.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=10)
    p.add_argument("--spacing", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", parents=[common], help="Hamiltonian Gibbs samples as JSON lines")
    p.add_argument("--weights", required=True)
    p.add_argument("--n-samples", type=int, default=500)
    p.add_argument("--burn-in", type=int, default=10)
    p.add_argument("--spacing", type=int, default=1)
    p.add_argument("--stdout", action="store_true", help="also echo the JSON lines")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", parents=[common], help="integrate the phase dynamics from a cue")
    p.add_argument("--weights", required=True)
    p.add_argument("--cue", required=True, help="JSON list of +/-1 or path to one")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--ks", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=200_000)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--flip-count", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.05)
    p.add_argument("--every", type=int, default=1, help="write every k-th step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-bounds", parents=[common], help="check the eigenvalue/energy bound")
    p.add_argument("--weights")
    p.add_argument("--random-n", type=int)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--mode", choices=["exhaustive", "analytic-bound"], default="exhaustive")
    p.add_argument("--samples", type=int, default=2000)
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("scatter", parents=[common], help="(h, lambda_max, is_desired) CSV")
    p.add_argument("--weights", required=True)
    p.add_argument("--patterns", required=True)
    p.add_argument("--sampled", type=int, default=0, help="use this many Gibbs samples instead of enumeration")
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser("experiment", parents=[common], help="run an experiment sweep")
    p.add_argument("--id", type=int, choices=[1, 2, 3], required=True)
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--m", type=int, nargs="+")
    p.add_argument("--alpha", type=float, nargs="+")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--iterations", type=int)
    p.add_argument("--snapshots", type=int, nargs="+")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--eval-samples", type=int)
    p.add_argument("--init-scale", type=float)
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--no-scatter", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    started = time.perf_counter()
    out_dir = Path(args.output_dir).resolve()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        threads = set_threads(args.threads)
        config, seed = args.func(args, out_dir)
        _write_manifest(out_dir, args.command, config, seed, threads, started)
    except ConfigError as exc:
        print(f"oimstab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, OverLimitError, EigenError, NoNegativeCandidateError) as exc:
        print(f"oimstab {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"oimstab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
