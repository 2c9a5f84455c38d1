import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmpgraph import gnn, nn
from cmpgraph.graphs import ContextGraph, GraphStream


def _graph(rows, i=None):
    rows = np.asarray(rows, dtype=float)
    i = rows.shape[0] if i is None else i
    return ContextGraph(i, rows, np.arange(i - rows.shape[0], i))


def _identity_model(F):
    return gnn.GcnEmbedder(np.eye(F), np.zeros(F))


def test_embed_examples():
    assert np.array_equal(gnn.embed(_identity_model(2), _graph([[1, 0], [0, 1]])), [0.5, 0.5])
    assert np.array_equal(gnn.embed(_identity_model(3), _graph(np.zeros((4, 3)))), np.zeros(3))
    with pytest.raises(ValueError):
        gnn.embed(_identity_model(3), _graph([[1, 0]]))


def test_embed_train_mode_uses_dropout():
    model = gnn.GcnEmbedder(np.eye(4), np.zeros(4), dropout_rate=0.5)
    g = _graph(np.ones((3, 4)))
    a = gnn.embed(model, g, training=True, rng=nn.make_rng(1))
    b = gnn.embed(model, g, training=True, rng=nn.make_rng(1))
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}
    assert np.array_equal(gnn.embed(model, g), np.ones(4))


def test_embed_permutation_invariant_exactly(rng):
    model = gnn.GcnEmbedder.init(5, 16, nn.make_rng(0))
    rows = rng.random((40, 5)) * 3.4
    base = gnn.embed(model, _graph(rows))
    for _ in range(10):
        assert np.array_equal(gnn.embed(model, _graph(rows[rng.permutation(40)])), base)


def test_pair_target_examples(rng):
    M = np.array([[[0.0, 3.0], [3.0, 0.0]]])
    assert gnn.pair_target(M, 0, 1) == pytest.approx(math.sqrt(18))
    A = rng.random((3, 6, 6))
    A = A + A.transpose(0, 2, 1)
    for kind in ("energy", "entropy"):
        assert gnn.pair_target(A, 2, 2, kind) == 0.0
        assert gnn.pair_target(A, 1, 4, kind) == gnn.pair_target(A, 4, 1, kind)
    with pytest.raises(ValueError):
        gnn.pair_target(A, 1, 2, "manhattan")


def test_pair_target_averages_features():
    M = np.zeros((2, 2, 2))
    M[0, 0, 1] = M[0, 1, 0] = 3.0
    M[1, 0, 1] = M[1, 1, 0] = 1.0
    assert gnn.pair_target(M, 0, 1) == pytest.approx((math.sqrt(18) + math.sqrt(2)) / 2)


def test_sample_pairs_distinct_and_seeded():
    a = gnn.sample_pairs(5, 500, nn.make_rng(2))
    assert np.all(a[:, 0] != a[:, 1]) and a.min() >= 0 and a.max() < 5
    assert np.array_equal(a, gnn.sample_pairs(5, 500, nn.make_rng(2)))
    # every ordered pair shows up
    assert len({tuple(p) for p in a}) == 20
    with pytest.raises(ValueError):
        gnn.sample_pairs(1, 3, nn.make_rng(0))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_pair_loss_gradients(F, d, seed):
    rng = nn.make_rng(seed)
    xbar = rng.random((4, F))
    pairs = gnn.sample_pairs(4, 5, rng)
    targets = rng.random(5)
    w, b = nn.init_weights(F, d, rng)
    b = b + 0.5  # keep most units active so the check is informative
    rep = nn.grad_check(lambda p: gnn.pair_loss(p, xbar, pairs, targets), {"W": w, "b": b})
    assert rep.ok, rep.max_rel_error


def test_zero_targets_drive_loss_to_zero():
    g = [_graph(np.ones((k, 3)), k) for k in range(2, 8)]
    stream = GraphStream(g)
    cmps = np.zeros((3, 8, 8))  # flat CMPs: every energy gap is zero
    cfg = gnn.TrainConfig(epochs=300, patience=300, dropout=0.0, embedding_dim=8,
                          learning_rate=0.05, target_scale="none")
    model = gnn.train_embedder(stream, cmps, cfg)
    assert model.history[model.best_epoch] < 1e-6


def test_training_reduces_loss_and_is_deterministic(small_stream):
    cmps, stream, _ = small_stream
    cfg = gnn.TrainConfig(seed=5)
    a = gnn.train_embedder(stream, cmps, cfg)
    b = gnn.train_embedder(stream, cmps, cfg)
    assert a.history[a.best_epoch] < a.history[0]
    assert a.history == b.history and np.array_equal(a.weights, b.weights)
    assert min(a.history) == a.history[a.best_epoch]
    with pytest.raises(ValueError):
        gnn.train_embedder(GraphStream(stream.graphs[:1]), cmps, cfg)


def test_episode_deltas_exceed_baseline(small_stream):
    cmps, stream, truth = small_stream
    model = gnn.train_embedder(stream, cmps, gnn.TrainConfig(seed=1))
    s = gnn.embedding_deltas(model, stream, "cosine", "x")
    assert s.detector == "gnn" and s.context_indices[0] == stream.context_indices[1]
    ep_ctx = np.unique(truth.episode_days() // 3)
    on = np.isin(s.context_indices, ep_ctx)
    assert s.scores[on].mean() > s.scores[~on].mean()


def test_embedding_distance_examples():
    e = np.array([0.2, 0.7])
    for metric in gnn.EMBEDDING_METRICS:
        assert gnn.embedding_distance(e, e, metric) == pytest.approx(0.0, abs=1e-15)
    assert gnn.embedding_distance([1, 0], [0, 2], "cosine") == 1.0
    assert gnn.embedding_distance([0, 0], [3, 4], "euclidean") == 5.0
    assert gnn.embedding_distance([0, 0], [3, 4], "chebyshev") == 4.0
    assert gnn.embedding_distance([0, 0], [0, 0], "cosine") == 0.0
    assert gnn.embedding_distance([0, 0], [3, 4], "cosine") == 1.0
    with pytest.raises(ValueError):
        gnn.embedding_distance(e, e, "hamming")


def test_config_validation():
    with pytest.raises(ValueError):
        gnn.TrainConfig(n_pairs=0)
    with pytest.raises(ValueError):
        gnn.TrainConfig(epochs=5, patience=10)
    with pytest.raises(ValueError):
        gnn.TrainConfig(graph_distance="frobenius")
    with pytest.raises(ValueError):
        gnn.TrainConfig(embedding_metric="l1")


def test_checkpoint_roundtrip(tmp_path, small_stream):
    cmps, stream, _ = small_stream
    cfg = gnn.TrainConfig(epochs=5, patience=5, embedding_dim=8)
    model = gnn.train_embedder(stream, cmps, cfg)
    gnn.save_checkpoint(tmp_path / "m.json", model, cfg)
    back, cfg2 = gnn.load_checkpoint(tmp_path / "m.json")
    assert cfg2 == cfg
    assert np.array_equal(back.weights, model.weights) and back.history == model.history
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        gnn.load_checkpoint(tmp_path / "x.json")
