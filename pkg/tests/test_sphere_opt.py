import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapse_lab.errors import InvalidModelError
from collapse_lab.harm_metrics import cosine_summary
from collapse_lab.sbm import BlockModel, SbmGraph, sample_sbm_fixed_counts, three_block_model
from collapse_lab.sphere_opt import (BlockEmbedding, Schedule, brute_force_reduced,
                                     reduced_gradient, reduced_objective, solve_full,
                                     solve_reduced)


def literal_reduced(H, pi, alpha, tau):
    """Term-by-term transcription of the reduced objective."""
    K = len(pi)
    value = 0.0
    for a in range(K):
        num = 0.0
        den = 0.0
        for b in range(K):
            num += pi[b] * alpha[a, b] * (H[a] @ H[b] / tau)
            den += pi[b] * alpha[a, b]
        value -= pi[a] * num / den
        value += pi[a] * np.log(sum(pi[c] * np.exp(H[a] @ H[c] / tau) for c in range(K)))
    return value


def unit(rng, shape):
    X = rng.standard_normal(shape)
    return X / np.linalg.norm(X, axis=-1, keepdims=True)


def test_schedule_defaults_and_validation():
    s = Schedule()
    assert (s.base_lr, s.exponent, s.steps) == (0.1, 0.2, 30000)
    assert s.lr(1) == pytest.approx(0.1)
    assert s.lr(32) == pytest.approx(0.1 * 32 ** -0.2)
    with pytest.raises(ValueError):
        Schedule(base_lr=0.0)
    with pytest.raises(ValueError):
        Schedule(steps=0)


def test_two_nodes_align():
    g = SbmGraph([0, 0], [[0, 1], [1, 0]], 1)
    V, rec = solve_full(g, d=2, tau=0.5, sched=Schedule(steps=2000), seed=3)
    assert V.rows[0] @ V.rows[1] >= 0.999
    payload = json.loads(rec.to_json())
    assert set(payload) == {"final_loss", "tangent_grad_norm", "steps", "seed", "tau", "d"}


def test_solve_full_rows_stay_unit_and_deterministic():
    g = sample_sbm_fixed_counts(three_block_model(), (10, 10, 10), 0)
    V1, r1 = solve_full(g, 4, 0.5, Schedule(steps=50), seed=1)
    V2, r2 = solve_full(g, 4, 0.5, Schedule(steps=50), seed=1)
    assert np.array_equal(V1.rows, V2.rows)
    assert np.allclose(np.linalg.norm(V1.rows, axis=1), 1.0, atol=1e-9)
    assert r1 == r2


def test_solve_full_rejects_small_d():
    g = SbmGraph([0, 0], [[0, 1], [1, 0]], 1)
    with pytest.raises(ValueError):
        solve_full(g, d=1)


def test_early_stop_and_plain_step():
    g = SbmGraph([0, 0], [[0, 1], [1, 0]], 1)
    _, rec = solve_full(g, 2, 0.5, Schedule(steps=5000, early_stop=1e-8), seed=0)
    assert rec.steps < 5000
    assert rec.tangent_grad_norm < 1e-8
    V, _ = solve_full(g, 2, 0.5, Schedule(steps=3000, per_node_step=False), seed=0)
    assert V.rows[0] @ V.rows[1] > 0.99


@pytest.mark.slow
def test_fig3_scenario_collapse_and_drift():
    model = three_block_model(cross=0.3, within=0.8)
    sched = Schedule(steps=5000)
    summaries = []
    for counts in ((64, 64, 64), (4, 64, 64)):
        g = sample_sbm_fixed_counts(model, counts, 0)
        V, _ = solve_full(g, 8, 1.1, sched, seed=0)
        summaries.append(cosine_summary(V, n_blocks=3))
    assert np.all(np.diag(summaries[0].mean) >= 0.95)
    assert summaries[1].mean[0, 1] >= summaries[0].mean[0, 1] + 0.1


def test_reduced_objective_trivial_values():
    one = BlockModel([1.0], [[0.7]])
    assert abs(reduced_objective([[0.0, 1.0]], one, 0.5)) < 1e-15
    model = three_block_model(pi1=0.2)
    H = np.tile([1.0, 0.0, 0.0], (3, 1))
    assert abs(reduced_objective(H, model, 0.5)) < 1e-12


def test_reduced_objective_matches_transcription():
    rng = np.random.default_rng(0)
    for _ in range(10):
        A = rng.uniform(0.05, 1, (3, 3))
        model = BlockModel(rng.dirichlet([2, 2, 2]), (A + A.T) / 2)
        H = unit(rng, (3, 5))
        tau = rng.uniform(0.2, 2)
        expected = literal_reduced(H, model.pi, model.alpha, tau)
        assert abs(reduced_objective(H, model, tau) - expected) < 1e-12


def test_reduced_gradient_finite_difference():
    rng = np.random.default_rng(1)
    A = rng.uniform(0.1, 1, (3, 3))
    model = BlockModel([0.2, 0.3, 0.5], (A + A.T) / 2)
    H = unit(rng, (3, 4))
    G = reduced_gradient(H, model, 0.7)
    eps = 1e-6
    for idx in np.ndindex(*H.shape):
        E = np.zeros_like(H)
        E[idx] = eps
        fd = (reduced_objective(H + E, model, 0.7) - reduced_objective(H - E, model, 0.7)) / (2 * eps)
        assert abs(fd - G[idx]) < 1e-7


def test_reduced_objective_guards_zero_connectivity():
    model = BlockModel([0.5, 0.5], [[0.0, 0.0], [0.0, 0.5]])
    with pytest.raises(InvalidModelError):
        reduced_objective(np.eye(2), model, 0.5)
    with pytest.raises(InvalidModelError):
        solve_reduced(model, 2, 0.5, Schedule(steps=10))


def test_solve_reduced_single_block():
    emb = solve_reduced(BlockModel([1.0], [[0.5]]), 3, 0.5, Schedule(steps=10), restarts=2)
    assert abs(emb.achieved_objective) < 1e-12


def test_solve_reduced_separated_pair_is_antipodal():
    model = BlockModel([0.5, 0.5], [[0.6, 0.0], [0.0, 0.6]])
    emb = solve_reduced(model, 2, 0.5, Schedule(steps=3000), restarts=4)
    # oracle: the objective as a function of the pair cosine on a fine grid
    c = np.linspace(-1, 1, 100_001)
    theta = np.arccos(c)
    vals = [reduced_objective([[1, 0], [np.cos(t), np.sin(t)]], model, 0.5) for t in theta[::1000]]
    assert c[::1000][int(np.argmin(vals))] == -1.0
    assert abs(emb.cosine(0, 1) + 1) < 1e-3


def test_solve_reduced_minority_merges():
    rest = (1 - 2.0 ** -8) / 2
    model = BlockModel([2.0 ** -8, rest, 1 - 2.0 ** -8 - rest],
                       three_block_model(cross=0.4).alpha)
    emb = solve_reduced(model, 8, 1.1, Schedule(steps=30000))
    assert emb.cosine(0, 1) >= 0.99


def test_solve_reduced_deterministic():
    model = three_block_model(pi1=0.25)
    a = solve_reduced(model, 4, 0.5, Schedule(steps=200), restarts=3, seed=7)
    b = solve_reduced(model, 4, 0.5, Schedule(steps=200), restarts=3, seed=7)
    assert np.array_equal(a.vectors, b.vectors)


def test_block_embedding_requires_unit_vectors():
    with pytest.raises(ValueError):
        BlockEmbedding([[1.0, 1.0]], 0.0)


def test_brute_force_pair_agrees():
    model = BlockModel([0.3, 0.7], [[0.8, 0.4], [0.4, 0.5]])
    brute = brute_force_reduced(model, 0.6, grid=2000)
    found = solve_reduced(model, 2, 0.6, Schedule(steps=5000))
    assert abs(brute.cosine(0, 1) - found.cosine(0, 1)) <= 0.01


def test_brute_force_three_blocks():
    model = three_block_model(pi1=1 / 3, cross=0.4)
    brute = brute_force_reduced(model, 1.1, grid=2000)
    found = solve_reduced(model, 2, 1.1, Schedule(steps=5000))
    assert np.max(np.abs(brute.gram() - found.gram())) <= 0.02


def test_brute_force_degenerate_grid_and_limits():
    model = three_block_model()
    emb = brute_force_reduced(model, 0.5, grid=1)
    assert np.allclose(emb.vectors, [[1, 0]] * 3)
    with pytest.raises(ValueError):
        brute_force_reduced(BlockModel([0.25] * 4, np.full((4, 4), 0.5)), 0.5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), tau=st.floats(0.2, 3.0))
def test_reduced_objective_rotation_invariant(seed, tau):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.05, 1, (3, 3))
    model = BlockModel(rng.dirichlet([1, 1, 1]) * 0.97 + 0.01, (A + A.T) / 2)
    H = unit(rng, (3, 4))
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    assert abs(reduced_objective(H, model, tau) - reduced_objective(H @ Q, model, tau)) < 1e-12
