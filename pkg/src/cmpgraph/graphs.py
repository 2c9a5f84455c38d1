"""Star graphs built from the rows of the per-feature CMPs.

Graph ``i`` has a central node for context ``i`` and one outer node per
earlier context ``j``; outer node ``j`` carries ``[M_f[i, j] for f]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cmp import Cmp


@dataclass
class ContextGraph:
    context_index: int
    outer_features: np.ndarray  # n_outer x F
    outer_indices: np.ndarray  # context index of each outer node

    @property
    def n_outer(self) -> int:
        return self.outer_features.shape[0]

    @property
    def n_features(self) -> int:
        return self.outer_features.shape[1]

    @property
    def central_features(self) -> np.ndarray:
        return np.zeros(self.n_features)

    def node_features(self) -> np.ndarray:
        """Node matrix with the central node first."""
        return np.vstack([self.central_features, self.outer_features])


@dataclass
class GraphStream:
    graphs: list[ContextGraph]

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, k):
        return self.graphs[k]

    @property
    def context_indices(self) -> np.ndarray:
        return np.array([g.context_index for g in self.graphs], dtype=int)

    @property
    def n_features(self) -> int:
        return self.graphs[0].n_features


def _matrices(cmps) -> np.ndarray:
    mats = cmps.matrices if isinstance(cmps, Cmp) else np.asarray(cmps, dtype=np.float64)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ValueError("expected per-feature CMPs of shape F x C x C")
    return mats


def build_graph(cmps, i: int, max_history: int | None = None) -> ContextGraph:
    """Star graph for context ``i`` over its predecessors (the last
    ``max_history`` of them when set)."""
    mats = _matrices(cmps)
    C = mats.shape[1]
    if i < 1:
        raise ValueError("context 0 has no previous contexts to form a graph")
    if i >= C:
        raise ValueError(f"context index {i} out of range for {C} contexts")
    lo = 0 if max_history is None else max(0, i - max_history)
    outer = np.ascontiguousarray(mats[:, i, lo:i].T)
    return ContextGraph(i, outer, np.arange(lo, i))


def build_stream(cmps, i_min: int = 2, max_history: int | None = None) -> GraphStream:
    mats = _matrices(cmps)
    C = mats.shape[1]
    if not 1 <= i_min < C:
        raise ValueError(f"i_min must lie in [1, {C}), got {i_min}")
    return GraphStream([build_graph(mats, i, max_history) for i in range(i_min, C)])


def write_stream_jsonl(path, stream: GraphStream) -> None:
    with Path(path).open("w") as fh:
        for g in stream:
            fh.write(json.dumps({
                "context_index": g.context_index,
                "outer_features": g.outer_features.tolist(),
            }) + "\n")


def read_stream_jsonl(path) -> GraphStream:
    graphs = []
    with Path(path).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            i = int(rec["context_index"])
            outer = np.asarray(rec["outer_features"], dtype=np.float64).reshape(len(rec["outer_features"]), -1)
            graphs.append(ContextGraph(i, outer, np.arange(i - outer.shape[0], i)))
    return GraphStream(graphs)
