"""Acceptance checks; each prints one PASS/FAIL line (also listed in the
terminal summary).  Criteria 1, 2, 6 and 8 take minutes and are marked slow."""

import numpy as np
import pytest

from oimstab.bounds import verify_bounds
from oimstab.dynamics import IntegratorConfig, integrate, rhs, stability_probe
from oimstab.evaluation import (
    ExperimentSpec,
    cell_seed,
    exact_spurious_rate,
    random_patterns,
    run_experiment,
    sampled_spurious_rate,
)
from oimstab.landscape import all_canonical_states, enumerate_canonical, top_pair_of_state
from oimstab.model import CouplingMatrix, MachineParams, build_a
from oimstab.sampler import GibbsConfig, make_rng, sample_chain
from oimstab.trainer import TrainConfig, eigen_grad_term, train

from conftest import all_states, brute_h, brute_lambda, record_criterion


def final_rates(rows):
    """r_s per (m, alpha, seed) from experiment rows, last iteration only."""
    out = {}
    for r in rows:
        key = (r[2], r[3], r[4])
        if key not in out or r[5] > out[key][0]:
            out[key] = (r[5], float(r[7]))
    return {k: v[1] for k, v in out.items()}


@pytest.mark.slow
def test_criterion_1_experiment_one_perfect_memory():
    spec = ExperimentSpec.defaults(1, snapshots=[2000], scatter=False, plots=False)
    rates = final_rates(run_experiment(spec)["rows"])
    zero = sum(r == 0 for r in rates.values())
    ok = zero >= 4
    record_criterion(1, "N=20 m=15 alpha=0.8 T=2000 exact r_s = 0 for >= 4 of 5 seeds", ok,
                     f"{zero}/5 seeds at zero; r_s = {[rates[k] for k in sorted(rates)]}")
    assert ok


@pytest.mark.slow
def test_criterion_2_regularization_helps():
    spec = ExperimentSpec.defaults(2, n_values=[10], plots=False)
    rates = final_rates(run_experiment(spec)["rows"])
    means = {}
    for (m, alpha, _), r in rates.items():
        means.setdefault((m, alpha), []).append(r)
    means = {k: float(np.mean(v)) for k, v in means.items()}
    ms = sorted({m for m, _ in means})
    never_worse = all(means[(m, 1.0)] <= means[(m, 0.0)] + 0.02 for m in ms)
    strictly_better = any(means[(m, 1.0)] < means[(m, 0.0)] for m in ms if m > 10)
    ok = never_worse and strictly_better
    table = "; ".join(f"m={m}: {means[(m, 0.0)]:.4f} -> {means[(m, 1.0)]:.4f}" for m in ms)
    record_criterion(2, "N=10 mean r_s(alpha=1) <= r_s(alpha=0)+0.02, strictly lower for some m>N", ok, table)
    assert ok


def test_criterion_3_eigenvalue_energy_bounds():
    rng = make_rng(3)
    bad = []
    checked = 0
    for n in range(4, 13):
        for _ in range(20):
            rep = verify_bounds(CouplingMatrix.random(n, 1.0, rng))
            checked += rep.states_checked
            if rep.violations:
                bad.append((n, rep.worst_lower_slack, rep.worst_upper_slack))
    ok = not bad
    record_criterion(3, "bounds hold on every canonical state, 20 J per N in 4..12", ok,
                     f"{checked} states checked, {len(bad)} instances with violations")
    assert ok


def test_criterion_4_gibbs_matches_boltzmann():
    rng = make_rng(4)
    states = all_states(4)
    index = {s.tobytes(): k for k, s in enumerate(states)}
    tvs = []
    for draw in range(3):
        j = CouplingMatrix.random(4, 1.0, rng)
        w = np.array([np.exp(-brute_h(j.j, s)) for s in states])
        exact = w / w.sum()
        chain = sample_chain(j, GibbsConfig(n_samples=1_000_000, seed=100 + draw))
        counts = np.zeros(len(states))
        for row, c in zip(*np.unique(chain.states, axis=0, return_counts=True)):
            counts[index[row.astype(np.int8).tobytes()]] += c
        tvs.append(0.5 * float(np.abs(counts / counts.sum() - exact).sum()))
    ok = max(tvs) < 0.01
    record_criterion(4, "Gibbs TV distance < 0.01 at N=4 after 1e6 sweeps", ok,
                     "TV = " + ", ".join(f"{t:.2e}" for t in tvs))
    assert ok


def test_criterion_5_gradient_matches_finite_differences():
    rng = make_rng(5)
    h = 1e-6
    worst = 0.0
    cases = 0
    while cases < 100:
        n = int(rng.integers(3, 13))
        j = CouplingMatrix.random(n, 1.0, rng).j
        s = np.where(rng.random(n) < 0.5, 1, -1)
        _, v, gap = top_pair_of_state(j, s)
        if gap <= 1e-6:
            continue
        g = eigen_grad_term(s, v)
        for a in range(n):
            for b in range(a + 1, n):
                jp, jm = j.copy(), j.copy()
                jp[a, b] = jp[b, a] = j[a, b] + h
                jm[a, b] = jm[b, a] = j[a, b] - h
                fd = (brute_lambda(jp, s) - brute_lambda(jm, s)) / (2 * h)
                # relative error, floored so entries near zero compare at 1e-8 absolute
                worst = max(worst, abs(g[a, b] - fd) / max(abs(fd), 1e-3))
        cases += 1
    ok = worst <= 1e-5
    record_criterion(5, "analytic gradient vs central differences within 1e-5 relative", ok,
                     f"100 cases, worst relative error {worst:.2e}")
    assert ok


def separated_instance(n, rng, margin=0.1):
    """Random J (rescaled if needed) and K_s/K sitting at least ``margin``
    from every lambda_N/2, with states on both sides."""
    j = CouplingMatrix.random(n, 1.0, rng).j
    half = np.sort(enumerate_canonical(j)[1] / 2)
    gaps = np.diff(half)
    k = int(np.argmax(gaps))
    scale = max(1.0, 2.5 * margin / gaps[k])
    j = j * scale
    ratio = scale * 0.5 * (half[k] + half[k + 1])
    return CouplingMatrix(j), ratio


@pytest.mark.slow
def test_criterion_6_stability_criterion_cross_check():
    rng = make_rng(6)
    mismatches = []
    total = 0
    summary = []
    for n in range(4, 9):
        j, ratio = separated_instance(n, rng)
        p = MachineParams(1.0, ratio)
        lam = enumerate_canonical(j)[1]
        assert np.min(np.abs(lam / 2 - ratio)) >= 0.1 - 1e-12
        cfg = IntegratorConfig.for_system(j, p, max_steps=400_000, seed=n)
        stable = 0
        for s in all_canonical_states(n):
            res = stability_probe(j, s, p, cfg, trials=10, rng=make_rng(cell_seed(6, n, *((s + 1) // 2))))
            total += 1
            stable += res.analytic_stable
            if not res.agree:
                mismatches.append((n, s.tolist(), res.returned))
        summary.append(f"N={n}: {stable}/{2 ** (n - 1)} stable")
    ok = not mismatches
    record_criterion(6, "analytic stability verdict matches perturbation probe on every state, N=4..8", ok,
                     f"{total} states, {len(mismatches)} mismatches; " + ", ".join(summary))
    assert ok


def test_criterion_7_energy_descent_and_linearization():
    rng = make_rng(7)
    n = 10
    worst_rise = -np.inf
    worst_jac = 0.0
    descent_ok = True
    h = 1e-6
    for t in range(100):
        j = CouplingMatrix.random(n, 1.0, rng)
        p = MachineParams(1.0, float(rng.uniform(0.1, 2.0)))
        cfg = IntegratorConfig.for_system(j, p, max_steps=3000)
        tr = integrate(j, rng.uniform(-np.pi, np.pi, n), p, cfg)
        e = tr.energies
        rise = np.diff(e) / (1 + np.abs(e[:-1]))
        worst_rise = max(worst_rise, float(rise.max()))
        descent_ok &= bool(np.all(rise <= 1e-8))

        s = np.where(rng.random(n) < 0.5, 1, -1)
        theta = np.where(s > 0, 0.0, np.pi)
        jac = np.empty((n, n))
        for k in range(n):
            step = np.zeros(n)
            step[k] = h
            jac[:, k] = (rhs(j, theta + step, p) - rhs(j, theta - step, p)) / (2 * h)
        worst_jac = max(worst_jac, float(np.abs(jac - build_a(j, s, p)).max()))
    ok = descent_ok and worst_jac <= 1e-5
    record_criterion(7, "energy non-increasing on 100 trajectories and Jacobian equals A(s)", ok,
                     f"max relative rise {worst_rise:.2e}, max Jacobian error {worst_jac:.2e}")
    assert ok


@pytest.mark.slow
def test_criterion_8_sampled_evaluation():
    n, m = 30, 20
    patterns = random_patterns(n, m, make_rng(cell_seed(3, n, m, 0)))
    cfg = TrainConfig(desired_patterns=patterns, alpha=1.0, iterations=5000, seed=cell_seed(3, n, m, 0, 1))
    tr = train(cfg)
    rep = sampled_spurious_rate(tr.final_weights, patterns, 20000, rng=make_rng(cell_seed(3, n, m, 0, 2)))
    large_ok = rep.b < 20000 and 0 <= rep.r_s < 1

    verdicts = []
    for n_small, m_small in [(10, 5), (10, 15), (12, 5), (12, 15)]:
        pats = random_patterns(n_small, m_small, make_rng(cell_seed(8, n_small, m_small)))
        small = train(TrainConfig(desired_patterns=pats, alpha=1.0, iterations=5000,
                                  seed=cell_seed(8, n_small, m_small, 1)))
        exact = exact_spurious_rate(small.final_weights, pats)
        sampled = sampled_spurious_rate(small.final_weights, pats, 20000,
                                        rng=make_rng(cell_seed(8, n_small, m_small, 2)))
        verdicts.append((n_small, m_small, exact.r_s, sampled.r_s, (exact.r_s == 0) == (sampled.r_s == 0)))
    agree = all(v[-1] for v in verdicts)
    ok = large_ok and agree
    detail = f"N=30: b={rep.b}, a={rep.a}, r_s={rep.r_s:.4f}; " + "; ".join(
        f"N={a} m={b}: exact {c:.4f} sampled {d:.4f}" for a, b, c, d, _ in verdicts)
    record_criterion(8, "sampled evaluation at N=30 (b < 20000, r_s < 1), verdict agrees with exact at N<=12",
                     ok, detail)
    assert ok
