import itertools

import numpy as np
import pytest

from oimstab.landscape import top_pair_of_state
from oimstab.model import CouplingMatrix
from oimstab.sampler import SampleSet, make_rng, sample_chain
from oimstab.trainer import (
    NoNegativeCandidateError,
    TrainConfig,
    correlation_matrix,
    eigen_grad_term,
    exact_objective,
    flip_neighbors,
    contrastive_step,
    select_extremes,
    train,
)
from oimstab.sampler import GibbsConfig

from conftest import brute_h, brute_lambda, random_j

SMALL_GIBBS = GibbsConfig(n_samples=100, burn_in_sweeps=5)


def fd_gradient(j, s, a, b, h=1e-6):
    jp, jm = j.copy(), j.copy()
    jp[a, b] += h
    jp[b, a] += h
    jm[a, b] -= h
    jm[b, a] -= h
    return (brute_lambda(jp, s) - brute_lambda(jm, s)) / (2 * h)


def test_gradient_examples():
    assert np.all(eigen_grad_term([1, -1, 1], np.ones(3) / np.sqrt(3)) == 0)
    g = eigen_grad_term([1, 1], np.array([1.0, -1.0]) / np.sqrt(2))
    assert abs(g[0, 1]) == pytest.approx(2.0) and g[0, 0] == 0
    with pytest.raises(ValueError):
        eigen_grad_term([1, 1], [1.0, 1.0])


def test_gradient_matches_finite_differences(rng):
    checked = 0
    while checked < 25:
        n = int(rng.integers(3, 9))
        j = random_j(n, rng).j
        s = np.where(rng.random(n) < 0.5, 1, -1)
        lam, v, gap = top_pair_of_state(j, s)
        if gap <= 1e-6:
            continue
        g = eigen_grad_term(s, v)
        for a, b in itertools.combinations(range(n), 2):
            assert g[a, b] == pytest.approx(fd_gradient(j, s, a, b), rel=1e-5, abs=1e-7)
        checked += 1


def test_correlation_matrix_examples():
    s = np.array([1, -1, 1])
    np.testing.assert_array_equal(correlation_matrix([s]), np.outer(s, s))
    np.testing.assert_array_equal(correlation_matrix([s, -s]), np.outer(s, s))
    np.testing.assert_array_equal(correlation_matrix([[1, 1], [1, -1]]), np.eye(2))
    with pytest.raises(ValueError):
        correlation_matrix(np.empty((0, 3)))


def test_select_extremes_argmin_and_exclusion(rng):
    j = random_j(6, rng)
    desired = np.array([[1, 1, 1, 1, 1, 1]])
    samples = SampleSet(np.where(rng.random((50, 6)) < 0.5, 1, -1).astype(np.int8))
    ext = select_extremes(j, desired, samples, make_rng(0))
    np.testing.assert_array_equal(ext.s_max, desired[0])
    pool = [s for s in samples.distinct if not np.array_equal(s, desired[0])]
    lams = [brute_lambda(j, s) for s in pool]
    assert ext.lambda_min == pytest.approx(min(lams), abs=1e-12)
    np.testing.assert_array_equal(ext.s_min, pool[int(np.argmin(lams))])


def test_tie_break_is_uniform():
    # J = 0: every lambda_N is 0, so both desired patterns tie
    j = np.zeros((4, 4))
    desired = np.array([[1, 1, 1, 1], [1, -1, 1, -1]])
    samples = SampleSet(np.array([[1, 1, -1, -1]], dtype=np.int8))
    r = make_rng(42)
    hits = sum(select_extremes(j, desired, samples, r).s_max[1] == 1 for _ in range(1000))
    assert abs(hits - 500) <= 3 * np.sqrt(1000 * 0.25)


def test_all_desired_samples():
    j = random_j(4, np.random.default_rng(0))
    desired = np.array([[1, 1, 1, 1], [1, -1, 1, -1]])
    samples = SampleSet(np.array([[1, 1, 1, 1], [-1, -1, -1, -1]], dtype=np.int8))
    with pytest.raises(NoNegativeCandidateError):
        select_extremes(j, desired, samples, make_rng(0))
    ext = select_extremes(j, desired, samples, make_rng(0), neighbor_fallback=True)
    assert np.count_nonzero(ext.s_min != np.array([1, 1, 1, 1])) in (1, 3)


def test_flip_neighbors():
    near = flip_neighbors(np.array([[1, 1, 1]]))
    assert sorted(map(tuple, near.tolist())) == [(1, -1, -1), (1, -1, 1), (1, 1, -1)]


def test_step_matches_explicit_formula(rng):
    n = 6
    j = random_j(n, rng).j
    desired = np.array([[1, 1, -1, 1, -1, 1], [1, -1, -1, 1, 1, 1]], dtype=np.int8)
    cfg = TrainConfig(desired_patterns=desired, alpha=0.7, learning_rate=0.05, gibbs=SMALL_GIBBS)
    j_next, trace = contrastive_step(j, cfg, make_rng(3))

    replay = make_rng(3)
    samples = sample_chain(j, cfg.gibbs, replay)
    ext = select_extremes(j, desired, samples, replay)
    cd = np.mean([np.outer(s, s) for s in desired], axis=0)
    cs = np.mean([np.outer(s, s) for s in samples.states.astype(float)], axis=0)
    expected = j.copy()
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            d = (-(ext.v_min[a] - ext.v_min[b]) ** 2 * ext.s_min[a] * ext.s_min[b]
                 + (ext.v_max[a] - ext.v_max[b]) ** 2 * ext.s_max[a] * ext.s_max[b]
                 + 0.7 * (cd[a, b] - cs[a, b]))
            expected[a, b] += 0.05 * d
    np.testing.assert_allclose(j_next, expected, atol=1e-14)
    assert np.array_equal(j_next, j_next.T)
    assert np.all(np.diag(j_next) == 0)
    assert trace.lambda_max_desired == ext.lambda_max


def test_train_one_step_and_determinism():
    desired = np.array([[1, 1, -1, 1, -1], [1, -1, 1, 1, 1]])
    cfg = TrainConfig(desired_patterns=desired, iterations=1, gibbs=SMALL_GIBBS, seed=5)
    assert len(train(cfg).steps) == 1
    cfg = TrainConfig(desired_patterns=desired, iterations=30, gibbs=SMALL_GIBBS, seed=5)
    a, b = train(cfg), train(cfg)
    np.testing.assert_array_equal(a.final_weights.j, b.final_weights.j)
    assert [s.grad_norm for s in a.steps] == [s.grad_norm for s in b.steps]
    j = a.final_weights.j
    assert np.array_equal(j, j.T) and np.all(np.diag(j) == 0)


def test_flip_invariance():
    desired = np.array([[1, 1, -1, 1, -1, 1], [1, -1, 1, 1, 1, -1]])
    flipped = desired.copy()
    flipped[1] *= -1
    kw = dict(iterations=25, gibbs=SMALL_GIBBS, seed=8, alpha=0.5)
    a = train(TrainConfig(desired_patterns=desired, **kw))
    b = train(TrainConfig(desired_patterns=flipped, **kw))
    np.testing.assert_array_equal(a.final_weights.j, b.final_weights.j)


def test_snapshots_and_stop_margin():
    desired = np.array([[1, 1, -1, 1, -1, 1]])
    tr = train(TrainConfig(desired_patterns=desired, iterations=20, gibbs=SMALL_GIBBS),
               snapshot_at=(1, 20))
    assert sorted(tr.snapshots) == [1, 20]
    np.testing.assert_array_equal(tr.snapshots[20].j, tr.final_weights.j)

    tr = train(TrainConfig(desired_patterns=desired, iterations=2000, gibbs=SMALL_GIBBS,
                           stop_margin=0.0))
    last = tr.steps[-1]
    if len(tr.steps) < 2000:
        assert last.lambda_max_desired < last.lambda_min_sampled


def test_config_rejects_duplicates_and_bad_values():
    with pytest.raises(ValueError):
        TrainConfig(desired_patterns=[[1, -1, 1], [-1, 1, -1]])
    with pytest.raises(ValueError):
        TrainConfig(desired_patterns=[[1, -1, 1]], learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(desired_patterns=[[1, -1, 1]], alpha=-1)
    cfg = TrainConfig(desired_patterns=[[1, -1, 1]], alpha=0.3)
    assert TrainConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def naive_objective(j, desired, alpha):
    """Double loop over every state in {+1,-1}^N."""
    n = j.shape[0]
    dset = {tuple(s) for s in desired} | {tuple(-np.asarray(s)) for s in desired}
    worst_desired, best_other, z, pd = -np.inf, np.inf, 0.0, 0.0
    for s in itertools.product([1, -1], repeat=n):
        w = np.exp(-brute_h(j, s))
        z += w
        lam = brute_lambda(j, s)
        if s in dset:
            pd += w
            worst_desired = max(worst_desired, lam)
        else:
            best_other = min(best_other, lam)
    return best_other - worst_desired + alpha * pd / z


def test_exact_objective_brute_force(rng):
    j = random_j(6, rng).j
    desired = np.array([[1, 1, -1, 1, -1, 1], [1, -1, -1, 1, 1, -1], [1, 1, 1, 1, 1, 1]])
    assert exact_objective(j, desired, 0.9) == pytest.approx(naive_objective(j, desired, 0.9), abs=1e-12)


def test_exact_objective_zero_coupling():
    n, m = 5, 3
    desired = np.array([[1, 1, 1, 1, 1], [1, -1, 1, -1, 1], [1, 1, -1, -1, 1]])
    assert exact_objective(np.zeros((n, n)), desired, 1.0) == pytest.approx(2 * m / 2 ** n, abs=1e-15)


def test_exact_objective_positive_for_perfect_memory():
    # J = p p^T (Hebbian, one pattern): the pattern has the unique smallest lambda_N
    p = np.array([1, -1, 1, 1, -1])
    j = np.outer(p, p).astype(float)
    np.fill_diagonal(j, 0)
    assert exact_objective(CouplingMatrix(j), [p], 0.0) > 0
