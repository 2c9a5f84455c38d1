from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class ScoreSeries:
    """Per-context anomaly scores for one subject."""

    subject_id: str
    context_indices: np.ndarray
    scores: np.ndarray
    detector: str = ""

    def __post_init__(self):
        self.context_indices = np.asarray(self.context_indices, dtype=int)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.context_indices.shape != self.scores.shape:
            raise ValueError("context_indices and scores must have equal length")
        if np.any(np.diff(self.context_indices) <= 0):
            raise ValueError("context indices must be strictly increasing")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError(f"non-finite scores from detector {self.detector!r}")

    def __len__(self):
        return self.scores.shape[0]


SCORE_HEADER = ["subject_id", "context_index", "score", "detector_name"]


def write_scores_csv(path, series: list[ScoreSeries]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_HEADER)
        for s in series:
            for idx, val in zip(s.context_indices, s.scores):
                w.writerow([s.subject_id, int(idx), repr(float(val)), s.detector])


def read_scores_csv(path) -> list[ScoreSeries]:
    rows: dict[tuple[str, str], list[tuple[int, float]]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SCORE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SCORE_HEADER)}")
        for row in reader:
            key = (row["subject_id"], row["detector_name"])
            rows.setdefault(key, []).append((int(row["context_index"]), float(row["score"])))
    out = []
    for (sid, det), vals in sorted(rows.items()):
        vals.sort()
        out.append(ScoreSeries(sid, [v[0] for v in vals], [v[1] for v in vals], det))
    return out
