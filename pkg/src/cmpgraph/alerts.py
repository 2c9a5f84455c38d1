"""Sliding-window moving-average thresholding of score streams."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .series import ScoreSeries

ZERO_STD = 1e-12


@dataclass(frozen=True)
class ThresholdConfig:
    window: int = 7
    n_std: float = 1.0
    min_fill: int | None = None  # defaults to window
    mask_alerts: bool = False

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if not self.n_std > 0:
            raise ValueError("n_std must be > 0")
        if self.min_fill is not None and self.min_fill < 1:
            raise ValueError("min_fill must be >= 1")

    @property
    def fill(self) -> int:
        return self.window if self.min_fill is None else self.min_fill


@dataclass
class AlertSeries:
    subject_id: str
    context_indices: np.ndarray
    day_indices: np.ndarray
    scores: np.ndarray
    thresholds: np.ndarray
    detector: str = ""

    def __len__(self):
        return self.context_indices.shape[0]


def threshold_mask(scores, cfg: ThresholdConfig) -> tuple[np.ndarray, np.ndarray]:
    """Boolean alert mask and per-index thresholds (NaN where not evaluated).

    Index ``t`` alerts when its score exceeds the mean plus ``n_std``
    population standard deviations of the previous ``window`` scores.
    """
    s = np.ascontiguousarray(scores, dtype=np.float64)
    return kernels.rolling_threshold(s, cfg.window, float(cfg.n_std), cfg.fill,
                                     ZERO_STD, bool(cfg.mask_alerts))


def threshold(series: ScoreSeries, cfg: ThresholdConfig = ThresholdConfig(),
              context_length: int = 3) -> AlertSeries:
    alert, thresh = threshold_mask(series.scores, cfg)
    ctx = series.context_indices[alert]
    return AlertSeries(series.subject_id, ctx, ctx * context_length, series.scores[alert],
                       thresh[alert], series.detector)


ALERT_HEADER = ["subject_id", "context_index", "day_index", "score", "threshold", "detector_name"]


def write_alerts_csv(path, alerts: list[AlertSeries]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ALERT_HEADER)
        for a in alerts:
            for c, d, s, t in zip(a.context_indices, a.day_indices, a.scores, a.thresholds):
                w.writerow([a.subject_id, int(c), int(d), repr(float(s)), repr(float(t)), a.detector])


def read_alerts_csv(path) -> dict[str, AlertSeries]:
    rows: dict[str, list[list[str]]] = {}
    detectors: dict[str, str] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ALERT_HEADER:
            raise ValueError(f"{path}: expected header {','.join(ALERT_HEADER)}")
        for row in reader:
            if not row:
                continue
            rows.setdefault(row[0], []).append(row)
            detectors[row[0]] = row[5]
    out = {}
    for sid, rs in sorted(rows.items()):
        out[sid] = AlertSeries(
            sid,
            np.array([int(r[1]) for r in rs], dtype=int),
            np.array([int(r[2]) for r in rs], dtype=int),
            np.array([float(r[3]) for r in rs]),
            np.array([float(r[4]) for r in rs]),
            detectors[sid],
        )
    return out
