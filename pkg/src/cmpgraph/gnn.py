"""Self-supervised single-layer GCN over CMP star graphs.

The embedder averages a graph's outer-node features and applies one dense
ReLU layer. It is trained on random graph pairs so that the Euclidean
distance between two embeddings regresses a CMP-derived "energy" gap
between the two contexts. At inference, distances between consecutive
embeddings become the anomaly score stream.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .cmp import Cmp, prefix_energies, prefix_entropies
from .graphs import ContextGraph, GraphStream
from .series import ScoreSeries

GRAPH_DISTANCES = ("energy", "entropy")
EMBEDDING_METRICS = ("cosine", "euclidean", "chebyshev")
TARGET_SCALES = ("mean", "none")
CHECKPOINT_FORMAT = "cmpgraph.gcn-embedder/1"


@dataclass(frozen=True)
class TrainConfig:
    n_pairs: int = 75
    epochs: int = 50
    patience: int = 10
    learning_rate: float = 1e-2
    embedding_dim: int = 128
    dropout: float = 0.3
    graph_distance: str = "energy"
    embedding_metric: str = "cosine"
    target_scale: str = "mean"
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if self.epochs < 1 or not 0 < self.patience <= self.epochs:
            raise ValueError("need epochs >= 1 and 0 < patience <= epochs")
        if self.graph_distance not in GRAPH_DISTANCES:
            raise ValueError(f"graph_distance must be one of {GRAPH_DISTANCES}")
        if self.embedding_metric not in EMBEDDING_METRICS:
            raise ValueError(f"embedding_metric must be one of {EMBEDDING_METRICS}")
        if self.target_scale not in TARGET_SCALES:
            raise ValueError(f"target_scale must be one of {TARGET_SCALES}")


@dataclass
class GcnEmbedder:
    weights: np.ndarray  # d x F
    bias: np.ndarray
    dropout_rate: float = 0.0
    history: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def embedding_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def init(cls, n_features: int, embedding_dim: int, rng: np.random.Generator,
             dropout_rate: float = 0.0) -> "GcnEmbedder":
        w, b = nn.init_weights(n_features, embedding_dim, rng)
        return cls(w, b, dropout_rate)

    @property
    def params(self) -> nn.Params:
        return {"W": self.weights, "b": self.bias}


def aggregate(g: ContextGraph) -> np.ndarray:
    """Mean of the outer-node features.

    Columns are sorted first so the float sum, and hence the embedding, is
    bit-identical under any reordering of the outer nodes.
    """
    return np.sort(g.outer_features, axis=0).mean(axis=0)


def embed(model: GcnEmbedder, g: ContextGraph, training: bool = False,
          rng: np.random.Generator | None = None) -> np.ndarray:
    if g.n_features != model.n_features:
        raise ValueError(f"graph has {g.n_features} features, model expects {model.n_features}")
    x = aggregate(g)
    if training:
        x = nn.dropout(x, model.dropout_rate, rng)
    return np.maximum(model.weights @ x + model.bias, 0.0)


def embed_stream(model: GcnEmbedder, stream: GraphStream) -> np.ndarray:
    return np.stack([embed(model, g) for g in stream])


def pair_targets_table(cmps, kind: str, m: int = 3) -> np.ndarray:
    """Per-context energy (or entropy) for each feature CMP, shape F x C."""
    mats = cmps.matrices if isinstance(cmps, Cmp) else np.asarray(cmps)
    if isinstance(cmps, Cmp):
        m = cmps.config.subsequence_length
    if kind == "energy":
        return np.stack([prefix_energies(M) for M in mats])
    if kind == "entropy":
        return np.stack([prefix_entropies(M, m) for M in mats])
    raise ValueError(f"unknown graph distance {kind!r}")


def pair_target(cmps, i: int, j: int, kind: str = "energy", m: int = 3) -> float:
    """Mean over features of the absolute energy (or entropy) gap between
    the CMP prefixes up to contexts ``i`` and ``j``."""
    table = pair_targets_table(cmps, kind, m)
    return float(np.mean(np.abs(table[:, i] - table[:, j])))


def sample_pairs(n_graphs: int, n_pairs: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform ordered pairs of distinct graph positions."""
    if n_graphs < 2:
        raise ValueError("need at least two graphs to sample pairs")
    first = rng.integers(0, n_graphs, size=n_pairs)
    offset = rng.integers(1, n_graphs, size=n_pairs)
    return np.stack([first, (first + offset) % n_graphs], axis=1)


def pair_loss(params: nn.Params, xbar: np.ndarray, pairs: np.ndarray,
              targets: np.ndarray) -> tuple[float, nn.Params]:
    """MSE between embedding distances and targets, with gradients.

    ``xbar`` holds the (possibly dropped-out) aggregated inputs, one row per
    graph.
    """
    W, b = params["W"], params["b"]
    pre = xbar @ W.T + b
    h = np.maximum(pre, 0.0)
    diff = h[pairs[:, 0]] - h[pairs[:, 1]]
    dist = np.sqrt((diff * diff).sum(axis=1))
    err = dist - targets
    P = pairs.shape[0]
    loss = float(np.mean(err * err))

    g_dist = 2.0 * err / P
    safe = np.where(dist > 0.0, dist, 1.0)
    g_diff = np.where(dist[:, None] > 0.0, (g_dist / safe)[:, None] * diff, 0.0)
    g_h = np.zeros_like(h)
    np.add.at(g_h, pairs[:, 0], g_diff)
    np.add.at(g_h, pairs[:, 1], -g_diff)
    g_pre = g_h * (pre > 0.0)
    return loss, {"W": g_pre.T @ xbar, "b": g_pre.sum(axis=0)}


def train_embedder(stream: GraphStream, cmps, cfg: TrainConfig) -> GcnEmbedder:
    """Fit the embedder on ``cfg.n_pairs`` random graph pairs with full-batch
    Adam and early stopping; the best-epoch weights are returned."""
    if len(stream) < 2:
        raise ValueError("training needs a stream of at least two graphs")
    rng = nn.make_rng(cfg.seed)
    model = GcnEmbedder.init(stream.n_features, cfg.embedding_dim, rng, cfg.dropout)
    pairs = sample_pairs(len(stream), cfg.n_pairs, rng)
    table = pair_targets_table(cmps, cfg.graph_distance)
    ctx = stream.context_indices
    targets = np.mean(np.abs(table[:, ctx[pairs[:, 0]]] - table[:, ctx[pairs[:, 1]]]), axis=0)
    # energies grow with the prefix size; rescale so targets are O(1)
    if cfg.target_scale == "mean" and targets.mean() > 0:
        targets = targets / targets.mean()
    xbar = np.stack([aggregate(g) for g in stream])

    def loss_fn(params, epoch):
        mask = nn.dropout_mask(xbar.shape, cfg.dropout, rng)
        x = xbar if mask is None else xbar * mask
        return pair_loss(params, x, pairs, targets)

    result = nn.fit(loss_fn, model.params, cfg.epochs, cfg.patience, cfg.learning_rate)
    return GcnEmbedder(result.params["W"], result.params["b"], cfg.dropout,
                       result.losses, result.best_epoch)


def embedding_distance(a: np.ndarray, b: np.ndarray, metric: str) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if metric == "euclidean":
        return float(np.sqrt(np.sum((a - b) ** 2)))
    if metric == "chebyshev":
        return float(np.max(np.abs(a - b))) if a.size else 0.0
    if metric == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 and nb == 0.0:
            return 0.0
        if na == 0.0 or nb == 0.0:
            return 1.0
        return float(1.0 - np.dot(a, b) / (na * nb))
    raise ValueError(f"unknown embedding metric {metric!r}")


def embedding_deltas(model: GcnEmbedder, stream: GraphStream, metric: str = "cosine",
                     subject_id: str = "") -> ScoreSeries:
    """Distance between each graph's embedding and its predecessor's."""
    emb = embed_stream(model, stream)
    scores = [embedding_distance(emb[k - 1], emb[k], metric) for k in range(1, len(stream))]
    return ScoreSeries(subject_id, stream.context_indices[1:], scores, "gnn")


def checkpoint_text(model: GcnEmbedder, cfg: TrainConfig) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "n_features": model.n_features,
        "embedding_dim": model.embedding_dim,
        "weights": model.weights.tolist(),
        "bias": model.bias.tolist(),
        "best_epoch": model.best_epoch,
        "loss_history": model.history,
        "config": asdict(cfg),
    }
    return json.dumps(doc, indent=1) + "\n"


def save_checkpoint(path, model: GcnEmbedder, cfg: TrainConfig) -> None:
    Path(path).write_text(checkpoint_text(model, cfg))


def load_checkpoint(path) -> tuple[GcnEmbedder, TrainConfig]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    cfg = TrainConfig(**doc["config"])
    model = GcnEmbedder(np.array(doc["weights"], dtype=np.float64),
                        np.array(doc["bias"], dtype=np.float64), cfg.dropout,
                        list(doc["loss_history"]), int(doc["best_epoch"]))
    return model, cfg
