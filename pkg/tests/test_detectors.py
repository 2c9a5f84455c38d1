import numpy as np
import pytest

from cmpgraph import detectors as D
from cmpgraph import nn
from cmpgraph.graphs import ContextGraph, GraphStream


def _tiny_stream(rng, F=3, sizes=(1, 2, 3)):
    return GraphStream([ContextGraph(n, rng.random((n, F)) * 3, np.arange(n)) for n in sizes])


def test_propagate_matches_dense_operator(rng):
    stream = _tiny_stream(rng, F=2, sizes=(1, 4, 9))
    b = D.GraphBatch.from_stream(stream)
    dense = np.zeros((b.x.shape[0],) * 2)
    for seg, n in zip(b.segments(), b.sizes):
        dense[seg, seg] = D.normalized_adjacency(n)
    h = rng.normal(size=(b.x.shape[0], 5))
    assert np.allclose(b.propagate(h), dense @ h, atol=1e-14)
    assert np.allclose(dense, dense.T)
    with pytest.raises(ValueError):
        D.GraphBatch.from_stream(GraphStream([]))


@pytest.mark.parametrize("layers,latent,alpha", [(1, "relu", 0.9), (4, "identity", 0.5),
                                                 (2, "relu", 0.0)])
def test_autoencoder_gradients(rng, layers, latent, alpha):
    b = D.GraphBatch.from_stream(_tiny_stream(rng))
    model = D.GraphAutoencoder(3, 4, layers, alpha, latent)
    params = model.init_params(nn.make_rng(3))
    mask = nn.dropout_mask(b.x.shape, 0.3, nn.make_rng(4))
    rep = nn.grad_check(lambda p: model.loss_and_grad(p, b, mask), params)
    assert rep.ok, rep.max_rel_error


def test_mlpae_gradients(rng):
    x = rng.random((6, 3))
    model = D.MlpAutoencoder(3, 4, 2)
    rep = nn.grad_check(lambda p: model.loss_and_grad(p, x, nn.dropout_mask(x.shape, 0.1, nn.make_rng(0))),
                        model.init_params(nn.make_rng(1)))
    assert rep.ok, rep.max_rel_error


def test_ocgnn_gradients(rng):
    b = D.GraphBatch.from_stream(_tiny_stream(rng))
    model = D.OneClassGnn(3, 4, 2, beta=0.5, weight_decay=1e-2)
    params = model.init_params(nn.make_rng(2))
    c = model.initial_center(params, b)
    r = 0.5 * model.radius(model.sq_distances(params, b, c))
    rep = nn.grad_check(lambda p: model.loss_and_grad(p, b, c, r), params)
    assert rep.ok, rep.max_rel_error


def test_combine_errors_examples():
    assert D.combine_errors(1.0, 0.0, 0.9) == pytest.approx(0.9)
    assert D.combine_errors(0.4, 123.0, 1.0) == 0.4
    assert D.combine_errors(0.0, 0.0, 0.5) == 0.0


def test_alpha_one_drops_structure(rng):
    b = D.GraphBatch.from_stream(_tiny_stream(rng))
    model = D.GraphAutoencoder(3, 4, 1, 1.0)
    params = model.init_params(nn.make_rng(0))
    attr, struct = model.node_errors(params, b)
    assert np.array_equal(model.central_scores(params, b), attr[b.starts])
    loss, _ = model.loss_and_grad(params, b)
    assert loss == pytest.approx(attr.mean())


def test_perfect_reconstruction_scores_zero():
    # all-zero nodes, zero weights: attributes reproduced exactly; with
    # alpha=1 the structure term is dropped so every score is 0
    stream = GraphStream([ContextGraph(n, np.zeros((n, 2)), np.arange(n)) for n in (2, 3)])
    b = D.GraphBatch.from_stream(stream)
    model = D.GraphAutoencoder(2, 3, 1, 1.0)
    params = {k: np.zeros_like(v) for k, v in model.init_params(nn.make_rng(0)).items()}
    assert np.all(model.central_scores(params, b) == 0.0)


def test_ocgnn_score_definition():
    model = D.OneClassGnn(2, 2, 1, beta=0.1, weight_decay=0.0)
    stream = GraphStream([ContextGraph(1, np.array([[1.0, 0.0]]), np.arange(1))])
    b = D.GraphBatch.from_stream(stream)
    params = {"enc0.W": np.zeros((2, 2))}
    z = model.embed(params, b)[0][b.starts]
    d2 = model.sq_distances(params, b, z[0])
    assert d2.tolist() == [0.0]  # at the centre: score = -r^2
    d_far = model.sq_distances(params, b, z[0] + np.array([3.0, 4.0]))
    assert d_far.tolist() == [25.0]


def test_ocgnn_center_guard(rng):
    b = D.GraphBatch.from_stream(_tiny_stream(rng))
    model = D.OneClassGnn(3, 6, 1, 0.1, 1e-4)
    c = model.initial_center(model.init_params(nn.make_rng(0)), b)
    assert np.all(np.abs(c) >= 0.1)


def test_mlpae_copy_task():
    rows = np.tile([0.5, 1.0, 1.5], (4, 1))
    stream = GraphStream([ContextGraph(i, rows, np.arange(4)) for i in (4, 5, 6)])
    cfg = D.MlpaeConfig(hidden_dim=4, dropout=0.0, epochs=1500, patience=100, learning_rate=0.02)
    run = D.run_mlpae(stream, cfg)
    assert run.fit.best_loss < 1e-4
    assert np.all(run.series.scores < 1e-2)


def test_cmp_baseline_examples():
    M = np.zeros((1, 4, 4))
    M[0, 3, :3] = [4.0, 1.0, 2.5]
    M[0, :3, 3] = [4.0, 1.0, 2.5]
    s = D.score_cmp_baseline(M, D.CmpBaselineConfig(k=1))
    assert s.context_indices.tolist() == [1, 2, 3] and s.scores[-1] == 1.0
    assert D.score_cmp_baseline(M, D.CmpBaselineConfig(k=2)).scores[-1] == 1.75
    # fewer than k predecessors: all available are averaged
    assert D.score_cmp_baseline(M, D.CmpBaselineConfig(k=5)).scores[-1] == pytest.approx(7.5 / 3)
    two = np.concatenate([M, 3 * M])
    assert D.score_cmp_baseline(two).scores[-1] == 2.0
    with pytest.raises(ValueError):
        D.score_cmp_baseline(np.zeros((1, 1, 1)))
    with pytest.raises(ValueError):
        D.CmpBaselineConfig(k=0)


def test_cmp_baseline_brute_force(rng):
    for k in (1, 2, 3):
        A = rng.random((3, 30, 30))
        M = A + A.transpose(0, 2, 1)
        s = D.score_cmp_baseline(M, D.CmpBaselineConfig(k=k), i_min=2)
        for i, score in zip(s.context_indices, s.scores):
            per_f = [np.mean(sorted(M[f, i, :i])[:k]) for f in range(3)]
            assert score == pytest.approx(np.mean(per_f), rel=1e-15)


def test_config_validation():
    with pytest.raises(ValueError):
        D.DominantConfig(alpha=1.5)
    with pytest.raises(ValueError):
        D.OcgnnConfig(beta=0.0)
    with pytest.raises(ValueError):
        D.GcnaeConfig(layers=0)
    with pytest.raises(ValueError):
        D.MlpaeConfig(dropout=1.0)
    assert D.GcnaeConfig().layers == 4 and D.GcnaeConfig().dropout == 0.3
    assert D.OcgnnConfig().dropout == 0.3 and D.DominantConfig().alpha == 0.9


FAST = dict(hidden_dim=16, epochs=15, patience=5)


@pytest.mark.parametrize("fn,cfg", [
    (D.score_dominant, D.DominantConfig(**FAST)),
    (D.score_mlpae, D.MlpaeConfig(**FAST)),
    (D.score_ocgnn, D.OcgnnConfig(**FAST)),
    (D.score_gcnae, D.GcnaeConfig(**FAST)),
])
def test_scorers_finite_and_deterministic(small_stream, fn, cfg):
    _, stream, _ = small_stream
    a = fn(stream, cfg, "s")
    b = fn(stream, cfg, "s")
    assert np.array_equal(a.scores, b.scores)
    assert np.all(np.isfinite(a.scores))
    assert a.context_indices.tolist() == stream.context_indices.tolist()
    if fn is not D.score_ocgnn:
        assert np.all(a.scores >= 0)


def test_ocgnn_episode_graphs_score_higher(small_stream):
    _, stream, truth = small_stream
    s = D.score_ocgnn(stream, D.OcgnnConfig(seed=0))
    on = np.isin(s.context_indices, np.unique(truth.episode_days() // 3))
    assert s.scores[on].mean() > s.scores[~on].mean()


def test_mlpae_shifted_features_score_higher(small_stream):
    _, stream, _ = small_stream
    run = D.run_mlpae(stream, D.MlpaeConfig(seed=0))
    model = D.MlpAutoencoder(stream.n_features, 128, 1)
    x = np.vstack([g.outer_features for g in stream])
    err = lambda v: np.sqrt(((model.reconstruct(run.fit.params, v) - v) ** 2).sum(1)).mean()
    assert err(x) < err(x + 1.0)
