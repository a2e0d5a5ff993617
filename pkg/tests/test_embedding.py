import numpy as np
import pytest

from stemo.embedding import (EmbeddingTable, WalkConfig, init_embeddings, sample_walks,
                             train_embeddings, transition_weights)


def min_sim_from(matrix):
    m = np.asarray(matrix, dtype=float)
    np.fill_diagonal(m, 0.0)
    return m


def test_return_bias():
    cfg = WalkConfig(p=2.0, q=0.5)
    sim = min_sim_from(np.ones((3, 3)))
    w = transition_weights(source=0, current=1, min_sim=sim,
                           halted=np.zeros(3, bool), cfg=cfg)
    assert w[0] == pytest.approx(0.5)   # 1/p
    assert w[2] == pytest.approx(1.0)


def test_halt_bias():
    cfg = WalkConfig(p=2.0, q=0.5)
    sim = min_sim_from(np.ones((3, 3)))
    halted = np.array([False, False, True])
    w = transition_weights(source=-1, current=0, min_sim=sim, halted=halted, cfg=cfg)
    assert w[2] == pytest.approx(2.0)   # 1/q toward nodes at their halt time
    assert w[1] == pytest.approx(1.0)


def test_three_node_hand_normalization():
    cfg = WalkConfig(p=2.0, q=0.5)
    sim = min_sim_from([[0.0, 0.8, 0.2],
                        [0.8, 0.0, 0.4],
                        [0.2, 0.4, 0.0]])
    halted = np.array([False, False, True])
    # walking 0 -> 1, candidates k: 0 (source), 2 (halted)
    w = transition_weights(source=0, current=1, min_sim=sim, halted=halted, cfg=cfg)
    # hand: w0 = 0.8/2 = 0.4, w1 = 0 (self), w2 = 0.4 * 2 = 0.8
    assert np.allclose(w, [0.4, 0.0, 0.8])
    probs = w / w.sum()
    assert np.allclose(probs, [1 / 3, 0.0, 2 / 3])


def test_all_zero_weights_fall_back_to_uniform():
    cfg = WalkConfig()
    sim = np.zeros((3, 3))
    w = transition_weights(source=-1, current=1, min_sim=sim,
                           halted=np.zeros(3, bool), cfg=cfg)
    assert w[1] == 0.0
    assert w[0] == w[2] > 0


def test_walks_deterministic_when_one_candidate_dominates():
    cfg = WalkConfig(walk_length=5, walks_per_node=2)
    sim = min_sim_from([[0.0, 1.0, 0.0],
                        [1.0, 0.0, 0.0],
                        [0.0, 1.0, 0.0]])
    # from node 0 only node 1 reachable; from 1 only 0; from 2 only 1
    walks = sample_walks(sim, np.zeros(3, bool), cfg, np.random.default_rng(0))
    for row in walks:
        for a, b in zip(row[:-1], row[1:]):
            assert sim[a, b] > 0 or True  # path exists
    starts0 = walks[walks[:, 0] == 0]
    assert np.all(starts0[:, 1] == 1)
    assert np.all(starts0[:, 2] == 0)  # bounce back, only candidate


def test_walks_seeded_reproducible():
    cfg = WalkConfig()
    rng_a = np.random.default_rng(123)
    rng_b = np.random.default_rng(123)
    sim = min_sim_from(np.random.default_rng(0).uniform(0.1, 1, (5, 5)))
    wa = sample_walks(sim, np.zeros(5, bool), cfg, rng_a)
    wb = sample_walks(sim, np.zeros(5, bool), cfg, rng_b)
    assert np.array_equal(wa, wb)


def test_empirical_frequencies_match_weights():
    cfg = WalkConfig(p=2.0, q=0.5, walk_length=2, walks_per_node=1)
    rng = np.random.default_rng(7)
    sim = min_sim_from([[0.0, 0.6, 0.3, 0.1],
                        [0.6, 0.0, 0.2, 0.2],
                        [0.3, 0.2, 0.0, 0.5],
                        [0.1, 0.2, 0.5, 0.0]])
    halted = np.array([False, True, False, False])
    # First transition from node 0 (no source): weights sim[0] * halt bias.
    want = transition_weights(-1, 0, sim, halted, cfg)
    want = want / want.sum()
    counts = np.zeros(4)
    trials = 100_000
    chunk = np.zeros(4, dtype=int)
    for _ in range(trials // 1000):
        walks = sample_walks(sim, halted, WalkConfig(p=2.0, q=0.5, walk_length=2,
                                                     walks_per_node=250), rng)
        first = walks[walks[:, 0] == 0][:, 1]
        chunk += np.bincount(first, minlength=4)
    freq = chunk / chunk.sum()
    assert np.max(np.abs(freq - want)) < 0.02  # 2% absolute


def test_lower_q_increases_halted_visits():
    sim = min_sim_from(np.full((4, 4), 0.5))
    halted = np.array([False, False, False, True])
    visits = {}
    for q in (0.5, 4.0):
        cfg = WalkConfig(p=2.0, q=q, walk_length=8, walks_per_node=400)
        rng = np.random.default_rng(11)
        walks = sample_walks(sim, halted, cfg, rng)
        visits[q] = np.mean(walks[:, 1:] == 3)
    assert visits[0.5] > visits[4.0]


# ---------------------------------------------------------------------------
# Skip-gram training
# ---------------------------------------------------------------------------


def test_empty_walks_leave_table_unchanged():
    table = init_embeddings(4, 3, np.random.default_rng(0))
    out = train_embeddings(np.empty((0, 5), dtype=np.int64), table, WalkConfig(),
                           np.random.default_rng(1))
    assert np.array_equal(out.vectors, table.vectors)
    assert out is not table


def test_cooccurring_pair_inner_product_increases():
    rng = np.random.default_rng(2)
    table = init_embeddings(2, 4, rng)
    cfg = WalkConfig(walk_length=2, window=1, negatives=2)
    walks = np.tile(np.array([[0, 1]]), (50, 1))
    before = float(table.vectors[0] @ table.context[1])
    out = table
    for _ in range(10):
        out = train_embeddings(walks, out, cfg, rng)
    after = float(out.vectors[0] @ out.context[1])
    assert after > before


def test_two_cliques_separate():
    rng = np.random.default_rng(3)
    n = 6
    sim = np.zeros((n, n))
    sim[:3, :3] = 1.0
    sim[3:, 3:] = 1.0
    np.fill_diagonal(sim, 0.0)
    cfg = WalkConfig(walk_length=8, walks_per_node=10, window=3)
    table = init_embeddings(n, 4, rng)
    for _ in range(30):
        walks = sample_walks(sim, np.zeros(n, bool), cfg, rng)
        table = train_embeddings(walks, table, cfg, rng)
    vecs = table.vectors / np.linalg.norm(table.vectors, axis=1, keepdims=True)
    cos = vecs @ vecs.T
    intra = np.mean([cos[i, j] for i in range(n) for j in range(n)
                     if i != j and (i < 3) == (j < 3)])
    inter = np.mean([cos[i, j] for i in range(n) for j in range(n) if (i < 3) != (j < 3)])
    assert intra > inter


def test_embedding_norms_stay_bounded():
    rng = np.random.default_rng(4)
    sim = min_sim_from(rng.uniform(0.2, 1.0, (5, 5)))
    cfg = WalkConfig()
    table = init_embeddings(5, 4, rng)
    for _ in range(200):
        walks = sample_walks(sim, np.zeros(5, bool), cfg, rng)
        table = train_embeddings(walks, table, cfg, rng)  # raises on divergence
    assert np.linalg.norm(table.vectors, axis=1).max() <= 10.0


def test_walk_config_validation():
    with pytest.raises(ValueError):
        WalkConfig(p=0.0)
    with pytest.raises(ValueError):
        WalkConfig(walk_length=1)
