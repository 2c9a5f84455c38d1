"""Graph outlier scorers over the star-graph stream, plus the CMP baseline.

All neural scorers train once on a subject's full stream (full-batch Adam,
early stopping on training loss) and then score every graph. Gradients are
written out by hand for each architecture.

Every GCN layer uses the symmetric-normalised star adjacency with self
loops. For a graph with ``n`` nodes (central node first) that operator is::

    central <- x_c / n          + sum_j x_j / sqrt(2n)
    outer j <- x_c / sqrt(2n)   + x_j / 2

which :class:`GraphBatch` applies to all graphs of a stream at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .cmp import Cmp
from .graphs import GraphStream
from .series import ScoreSeries

DETECTORS = ("dominant", "mlpae", "ocgnn", "gcnae", "cmp_baseline")


# -- graph batching ---------------------------------------------------------

@dataclass
class GraphBatch:
    x: np.ndarray  # N x F, each graph's central node first
    starts: np.ndarray
    sizes: np.ndarray
    graph_of: np.ndarray

    @classmethod
    def from_stream(cls, stream: GraphStream) -> "GraphBatch":
        if len(stream) == 0:
            raise ValueError("graph stream is empty")
        blocks = [g.node_features() for g in stream]
        sizes = np.array([b.shape[0] for b in blocks], dtype=np.intp)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
        graph_of = np.repeat(np.arange(len(blocks)), sizes)
        return cls(np.vstack(blocks), starts, sizes, graph_of)

    @property
    def n_graphs(self) -> int:
        return self.starts.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def propagate(self, h: np.ndarray) -> np.ndarray:
        """Multiply by the normalised adjacency (symmetric, so it is also its
        own transpose for backprop)."""
        n = self.sizes[:, None].astype(np.float64)
        central = h[self.starts]
        outer = h.copy()
        outer[self.starts] = 0.0
        outer_sum = np.add.reduceat(outer, self.starts, axis=0)
        spoke = 1.0 / np.sqrt(2.0 * n)
        out = 0.5 * h + (central * spoke)[self.graph_of]
        out[self.starts] = central / n + outer_sum * spoke
        return out

    def segments(self):
        for s, n in zip(self.starts, self.sizes):
            yield slice(s, s + n)


def star_adjacency(n: int) -> np.ndarray:
    a = np.zeros((n, n))
    a[0, 1:] = 1.0
    a[1:, 0] = 1.0
    return a


def normalized_adjacency(n: int) -> np.ndarray:
    """Dense D^-1/2 (A + I) D^-1/2 for one star graph; reference for tests."""
    a = star_adjacency(n) + np.eye(n)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


# -- shared pieces ----------------------------------------------------------

@dataclass
class DetectorRun:
    """A fitted scorer: its score stream plus the training record."""

    series: ScoreSeries
    fit: nn.FitResult
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NeuralConfig:
    hidden_dim: int = 128
    layers: int = 1
    dropout: float = 0.0
    epochs: int = 100
    patience: int = 10
    learning_rate: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.epochs < 1 or not 0 < self.patience <= self.epochs:
            raise ValueError("need epochs >= 1 and 0 < patience <= epochs")


@dataclass(frozen=True)
class DominantConfig(NeuralConfig):
    alpha: float = 0.9

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class GcnaeConfig(NeuralConfig):
    layers: int = 4
    dropout: float = 0.3


@dataclass(frozen=True)
class MlpaeConfig(NeuralConfig):
    dropout: float = 0.1


@dataclass(frozen=True)
class OcgnnConfig(NeuralConfig):
    dropout: float = 0.3
    beta: float = 0.1
    weight_decay: float = 1e-4

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")


@dataclass(frozen=True)
class CmpBaselineConfig:
    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def _row_norms(r: np.ndarray) -> np.ndarray:
    return np.sqrt((r * r).sum(axis=1))


def _norm_grad(r: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """d||r_i|| / d r_i, taken as zero where the residual vanishes."""
    safe = np.where(norms > 0.0, norms, 1.0)
    return np.where(norms[:, None] > 0.0, r / safe[:, None], 0.0)


def _init_gcn(params, prefix, dims, rng, bias=True):
    for l in range(len(dims) - 1):
        w, b = nn.init_weights(dims[l], dims[l + 1], rng, bias=bias)
        params[f"{prefix}{l}.W"] = w
        if bias:
            params[f"{prefix}{l}.b"] = b


def _gcn_forward(params, prefix, n_layers, batch, h, acts):
    caches = []
    for l in range(n_layers):
        agg = batch.propagate(h)
        pre = agg @ params[f"{prefix}{l}.W"].T
        if f"{prefix}{l}.b" in params:
            pre = pre + params[f"{prefix}{l}.b"]
        h = nn.activate(pre, acts[l])
        caches.append((agg, pre, h))
    return h, caches


def _gcn_backward(params, prefix, batch, caches, acts, grad, grads):
    for l in reversed(range(len(caches))):
        agg, pre, out = caches[l]
        g_pre = grad * nn.activation_grad(pre, out, acts[l])
        grads[f"{prefix}{l}.W"] = g_pre.T @ agg
        if f"{prefix}{l}.b" in params:
            grads[f"{prefix}{l}.b"] = g_pre.sum(axis=0)
        grad = batch.propagate(g_pre @ params[f"{prefix}{l}.W"])
    return grad


def _mask(shape, rate, rng):
    return nn.dropout_mask(shape, rate, rng)


# -- attributed graph autoencoders (DOMINANT, GCNAE) ------------------------

class GraphAutoencoder:
    """GCN encoder, dense attribute decoder and inner-product structure
    decoder. Node error is ``alpha * attr + (1 - alpha) * struct`` with both
    terms Euclidean norms of the reconstruction residual."""

    def __init__(self, n_features: int, hidden_dim: int, layers: int, alpha: float,
                 latent_activation: str = "relu"):
        self.n_features = n_features
        self.dims = [n_features] + [hidden_dim] * layers
        self.acts = ["relu"] * (layers - 1) + [latent_activation]
        self.alpha = alpha

    def init_params(self, rng) -> nn.Params:
        params: nn.Params = {}
        _init_gcn(params, "enc", self.dims, rng)
        w, b = nn.init_weights(self.dims[-1], self.n_features, rng)
        params["dec.W"], params["dec.b"] = w, b
        return params

    def _forward(self, params, batch, x_in):
        z, caches = _gcn_forward(params, "enc", len(self.acts), batch, x_in, self.acts)
        x_hat = z @ params["dec.W"].T + params["dec.b"]
        attr_res = x_hat - batch.x
        attr_err = _row_norms(attr_res)
        struct_err = np.empty(batch.x.shape[0])
        s_blocks = []
        for seg in batch.segments():
            zs = z[seg]
            s = nn.sigmoid(zs @ zs.T)
            d = s - star_adjacency(zs.shape[0])
            struct_err[seg] = _row_norms(d)
            s_blocks.append((s, d))
        return z, caches, x_hat, attr_res, attr_err, struct_err, s_blocks

    def node_errors(self, params, batch) -> tuple[np.ndarray, np.ndarray]:
        out = self._forward(params, batch, batch.x)
        return out[4], out[5]

    def loss_and_grad(self, params, batch, mask=None):
        x_in = batch.x if mask is None else batch.x * mask
        z, caches, x_hat, attr_res, attr_err, struct_err, s_blocks = self._forward(params, batch, x_in)
        N = batch.x.shape[0]
        a = self.alpha
        loss = float(np.sum(a * attr_err + (1.0 - a) * struct_err) / N)

        grads: nn.Params = {}
        g_xhat = (a / N) * _norm_grad(attr_res, attr_err)
        grads["dec.W"] = g_xhat.T @ z
        grads["dec.b"] = g_xhat.sum(axis=0)
        g_z = g_xhat @ params["dec.W"]
        if a < 1.0:
            for seg, (s, d) in zip(batch.segments(), s_blocks):
                g_s = ((1.0 - a) / N) * _norm_grad(d, struct_err[seg])
                g_p = g_s * s * (1.0 - s)
                g_z[seg] += (g_p + g_p.T) @ z[seg]
        _gcn_backward(params, "enc", batch, caches, self.acts, g_z, grads)
        return loss, grads

    def central_scores(self, params, batch) -> np.ndarray:
        attr, struct = self.node_errors(params, batch)
        return combine_errors(attr, struct, self.alpha)[batch.starts]


def combine_errors(attr_err, struct_err, alpha: float):
    return alpha * np.asarray(attr_err) + (1.0 - alpha) * np.asarray(struct_err)


def _train(model, loss_fn_factory, cfg: NeuralConfig):
    rng = nn.make_rng(cfg.seed)
    params = model.init_params(rng)
    loss_fn = loss_fn_factory(rng)
    return nn.fit(loss_fn, params, cfg.epochs, cfg.patience, cfg.learning_rate)


def _fit_autoencoder(stream, cfg, alpha, latent_activation):
    batch = GraphBatch.from_stream(stream)
    model = GraphAutoencoder(batch.n_features, cfg.hidden_dim, cfg.layers, alpha, latent_activation)

    def factory(rng):
        def loss_fn(params, epoch):
            return model.loss_and_grad(params, batch, _mask(batch.x.shape, cfg.dropout, rng))
        return loss_fn

    result = _train(model, factory, cfg)
    return model, batch, result


def run_dominant(stream: GraphStream, cfg: DominantConfig = DominantConfig(),
                 subject_id: str = "") -> DetectorRun:
    model, batch, result = _fit_autoencoder(stream, cfg, cfg.alpha, "relu")
    series = ScoreSeries(subject_id, stream.context_indices,
                         model.central_scores(result.params, batch), "dominant")
    return DetectorRun(series, result)


def score_dominant(stream: GraphStream, cfg: DominantConfig = DominantConfig(),
                   subject_id: str = "") -> ScoreSeries:
    """Central-node reconstruction error of a DOMINANT-style autoencoder."""
    return run_dominant(stream, cfg, subject_id).series


def run_gcnae(stream: GraphStream, cfg: GcnaeConfig = GcnaeConfig(),
              subject_id: str = "") -> DetectorRun:
    model, batch, result = _fit_autoencoder(stream, cfg, 0.5, "identity")
    series = ScoreSeries(subject_id, stream.context_indices,
                         model.central_scores(result.params, batch), "gcnae")
    return DetectorRun(series, result)


def score_gcnae(stream: GraphStream, cfg: GcnaeConfig = GcnaeConfig(),
                subject_id: str = "") -> ScoreSeries:
    """Central-node error of a plain GCN autoencoder (linear latent layer,
    equal attribute/structure weights)."""
    return run_gcnae(stream, cfg, subject_id).series


# -- MLP autoencoder ----------------------------------------------------------

class MlpAutoencoder:
    def __init__(self, n_features: int, hidden_dim: int, layers: int):
        self.dims = [n_features] + [hidden_dim] * layers + [n_features]
        self.acts = ["relu"] * layers + ["identity"]

    def init_params(self, rng) -> nn.Params:
        params: nn.Params = {}
        for l in range(len(self.dims) - 1):
            params[f"l{l}.W"], params[f"l{l}.b"] = nn.init_weights(self.dims[l], self.dims[l + 1], rng)
        return params

    def _forward(self, params, x):
        caches = []
        h = x
        for l, act in enumerate(self.acts):
            pre = h @ params[f"l{l}.W"].T + params[f"l{l}.b"]
            out = nn.activate(pre, act)
            caches.append((h, pre, out))
            h = out
        return h, caches

    def reconstruct(self, params, x):
        return self._forward(params, x)[0]

    def loss_and_grad(self, params, x, mask=None):
        """Mean squared reconstruction norm; ``mask`` corrupts the input only."""
        x_in = x if mask is None else x * mask
        x_hat, caches = self._forward(params, x_in)
        res = x_hat - x
        N = x.shape[0]
        loss = float((res * res).sum() / N)
        grad = 2.0 * res / N
        grads: nn.Params = {}
        for l in reversed(range(len(self.acts))):
            h, pre, out = caches[l]
            g_pre = grad * nn.activation_grad(pre, out, self.acts[l])
            grads[f"l{l}.W"] = g_pre.T @ h
            grads[f"l{l}.b"] = g_pre.sum(axis=0)
            grad = g_pre @ params[f"l{l}.W"]
        return loss, grads


def run_mlpae(stream: GraphStream, cfg: MlpaeConfig = MlpaeConfig(),
              subject_id: str = "") -> DetectorRun:
    if len(stream) == 0:
        raise ValueError("graph stream is empty")
    x = np.vstack([g.outer_features for g in stream])
    owner = np.repeat(np.arange(len(stream)), [g.n_outer for g in stream])
    model = MlpAutoencoder(x.shape[1], cfg.hidden_dim, cfg.layers)

    def factory(rng):
        def loss_fn(params, epoch):
            return model.loss_and_grad(params, x, _mask(x.shape, cfg.dropout, rng))
        return loss_fn

    result = _train(model, factory, cfg)
    err = _row_norms(model.reconstruct(result.params, x) - x)
    scores = np.bincount(owner, weights=err) / np.bincount(owner)
    return DetectorRun(ScoreSeries(subject_id, stream.context_indices, scores, "mlpae"), result)


def score_mlpae(stream: GraphStream, cfg: MlpaeConfig = MlpaeConfig(),
                subject_id: str = "") -> ScoreSeries:
    """Mean outer-node reconstruction error of a denoising MLP autoencoder
    trained on every outer-node vector in the stream."""
    return run_mlpae(stream, cfg, subject_id).series


# -- one-class GNN ------------------------------------------------------------

class OneClassGnn:
    """Bias-free GCN embedding of each central node scored against a
    hypersphere; the bias is omitted so the map cannot collapse onto the
    centre trivially."""

    center_floor = 0.1

    def __init__(self, n_features: int, hidden_dim: int, layers: int, beta: float,
                 weight_decay: float):
        self.dims = [n_features] + [hidden_dim] * layers
        self.acts = ["relu"] * (layers - 1) + ["identity"]
        self.beta = beta
        self.weight_decay = weight_decay

    def init_params(self, rng) -> nn.Params:
        params: nn.Params = {}
        _init_gcn(params, "enc", self.dims, rng, bias=False)
        return params

    def embed(self, params, batch, x_in=None):
        x_in = batch.x if x_in is None else x_in
        z, caches = _gcn_forward(params, "enc", len(self.acts), batch, x_in, self.acts)
        return z, caches

    def initial_center(self, params, batch) -> np.ndarray:
        c = self.embed(params, batch)[0][batch.starts].mean(axis=0)
        small = np.abs(c) < self.center_floor
        c[small] = np.where(c[small] < 0, -self.center_floor, self.center_floor)
        return c

    def sq_distances(self, params, batch, center) -> np.ndarray:
        z = self.embed(params, batch)[0][batch.starts]
        return ((z - center) ** 2).sum(axis=1)

    def radius(self, sq_dist: np.ndarray) -> float:
        return float(np.quantile(np.sqrt(sq_dist), 1.0 - self.beta))

    def loss_and_grad(self, params, batch, center, radius, mask=None):
        """Soft-boundary objective with ``radius`` held fixed."""
        x_in = batch.x if mask is None else batch.x * mask
        z, caches = self.embed(params, batch, x_in)
        zc = z[batch.starts] - center
        d2 = (zc * zc).sum(axis=1)
        G = d2.shape[0]
        r2 = radius * radius
        excess = d2 - r2
        outside = excess > 0.0
        coef = 1.0 / (self.beta * G)
        loss = r2 + coef * excess[outside].sum()
        for name, w in params.items():
            loss += 0.5 * self.weight_decay * float((w * w).sum())
        g_z = np.zeros_like(z)
        g_z[batch.starts] = np.where(outside[:, None], 2.0 * coef * zc, 0.0)
        grads: nn.Params = {}
        _gcn_backward(params, "enc", batch, caches, self.acts, g_z, grads)
        for name in grads:
            grads[name] = grads[name] + self.weight_decay * params[name]
        return float(loss), grads


def run_ocgnn(stream: GraphStream, cfg: OcgnnConfig = OcgnnConfig(),
              subject_id: str = "") -> DetectorRun:
    batch = GraphBatch.from_stream(stream)
    model = OneClassGnn(batch.n_features, cfg.hidden_dim, cfg.layers, cfg.beta, cfg.weight_decay)
    rng = nn.make_rng(cfg.seed)
    params = model.init_params(rng)
    center = model.initial_center(params, batch)

    def loss_fn(p, epoch):
        mask = _mask(batch.x.shape, cfg.dropout, rng)
        x_in = batch.x if mask is None else batch.x * mask
        z = model.embed(p, batch, x_in)[0][batch.starts]
        r = model.radius(((z - center) ** 2).sum(axis=1))
        return model.loss_and_grad(p, batch, center, r, mask)

    result = nn.fit(loss_fn, params, cfg.epochs, cfg.patience, cfg.learning_rate)
    d2 = model.sq_distances(result.params, batch, center)
    r = model.radius(d2)
    series = ScoreSeries(subject_id, stream.context_indices, d2 - r * r, "ocgnn")
    return DetectorRun(series, result, {"center": center, "radius": r})


def score_ocgnn(stream: GraphStream, cfg: OcgnnConfig = OcgnnConfig(),
                subject_id: str = "") -> ScoreSeries:
    """Squared distance of each central-node embedding from the hypersphere
    centre, minus the squared radius."""
    return run_ocgnn(stream, cfg, subject_id).series


# -- CMP baseline -------------------------------------------------------------

def score_cmp_baseline(cmps, cfg: CmpBaselineConfig = CmpBaselineConfig(), i_min: int = 1,
                       subject_id: str = "") -> ScoreSeries:
    """Mean over features of the average of the ``k`` smallest CMP distances
    from each context to its predecessors."""
    mats = cmps.matrices if isinstance(cmps, Cmp) else np.asarray(cmps, dtype=np.float64)
    if mats.ndim == 2:
        mats = mats[None]
    C = mats.shape[1]
    if C < 2:
        raise ValueError("need at least two contexts")
    if not 1 <= i_min < C:
        raise ValueError(f"i_min must lie in [1, {C})")
    idx = np.arange(i_min, C)
    scores = np.empty(idx.shape[0])
    for n, i in enumerate(idx):
        row = mats[:, i, :i]
        k = min(cfg.k, i)
        nearest = np.partition(row, k - 1, axis=1)[:, :k] if k < i else row
        scores[n] = nearest.mean(axis=1).mean()
    return ScoreSeries(subject_id, idx, scores, "cmp_baseline")
