"""Cohort metrics: event recall under soft label margins, alert rate and
subject-level validity."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class Margins:
    before: int = 10
    after: int = 7

    def __post_init__(self):
        if self.before < 0 or self.after < 0:
            raise ValueError("margins must be non-negative")


@dataclass
class SubjectResult:
    subject_id: str
    n_events: int
    n_detected: int
    alert_days: int
    scored_days: int

    @property
    def recall(self) -> float | None:
        return self.n_detected / self.n_events if self.n_events else None

    @property
    def alert_rate(self) -> float:
        return 100.0 * self.alert_days / self.scored_days if self.scored_days else 0.0


@dataclass
class EvalReport:
    subjects: list[SubjectResult]
    x_percent: float
    margins: Margins
    pooled_alert_rate: bool = False
    detector: str = ""
    cohort_recall: float = field(init=False)
    mean_subject_recall: float = field(init=False)
    alert_rate: float = field(init=False)
    validity: int = field(init=False)
    validity_total: int = field(init=False)

    def __post_init__(self):
        events = sum(s.n_events for s in self.subjects)
        detected = sum(s.n_detected for s in self.subjects)
        self.cohort_recall = 100.0 * detected / events if events else 0.0
        recalls = [s.recall for s in self.subjects if s.recall is not None]
        self.mean_subject_recall = 100.0 * float(np.mean(recalls)) if recalls else 0.0
        if self.pooled_alert_rate:
            days = sum(s.scored_days for s in self.subjects)
            self.alert_rate = 100.0 * sum(s.alert_days for s in self.subjects) / days if days else 0.0
        else:
            rates = [s.alert_rate for s in self.subjects]
            self.alert_rate = float(np.mean(rates)) if rates else 0.0
        self.validity = sum(1 for r in recalls if 100.0 * r > self.x_percent)
        self.validity_total = len(recalls)

    def summary(self) -> dict:
        return {
            "detector": self.detector,
            "cohort_recall_percent": self.cohort_recall,
            "mean_subject_recall_percent": self.mean_subject_recall,
            "alert_rate_percent": self.alert_rate,
            "alert_rate_mode": "pooled" if self.pooled_alert_rate else "per_subject_mean",
            "validity": self.validity,
            "validity_total": self.validity_total,
            "x_percent": self.x_percent,
            "margin_before": self.margins.before,
            "margin_after": self.margins.after,
        }

    def to_json(self) -> str:
        doc = self.summary()
        doc["subjects"] = [dict(asdict(s), recall=s.recall, alert_rate=s.alert_rate)
                           for s in self.subjects]
        return json.dumps(doc, indent=2) + "\n"

    def write(self, json_path, csv_path) -> None:
        Path(json_path).write_text(self.to_json())
        with Path(csv_path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject_id", "n_events", "n_detected", "recall", "alert_days",
                        "scored_days", "alert_rate"])
            for s in self.subjects:
                w.writerow([s.subject_id, s.n_events, s.n_detected,
                            "" if s.recall is None else repr(s.recall), s.alert_days,
                            s.scored_days, repr(s.alert_rate)])


def match_events(alert_days: Iterable[int], event_days: Iterable[int],
                 margins: Margins = Margins()) -> tuple[list[int], list[int]]:
    """Split events into (detected, missed).

    An event on day ``d`` is detected when some alert falls in
    ``[d - before, d + after]``; one alert may cover several events.
    """
    alerts = np.sort(np.asarray(list(alert_days), dtype=int))
    detected, missed = [], []
    for d in event_days:
        lo = np.searchsorted(alerts, d - margins.before, side="left")
        hi = np.searchsorted(alerts, d + margins.after, side="right")
        (detected if hi > lo else missed).append(int(d))
    return detected, missed


def report(alert_days: Mapping[str, Iterable[int]], labels: Mapping[str, Iterable[int]],
           scored_days: Mapping[str, int], x_percent: float = 50.0,
           margins: Margins = Margins(), pooled_alert_rate: bool = False,
           detector: str = "") -> EvalReport:
    """Build the cohort report. Every subject with alerts or labels must
    appear in ``scored_days``."""
    unknown = (set(alert_days) | set(labels)) - set(scored_days)
    if unknown:
        raise ValueError(f"subjects without scored-day counts: {sorted(unknown)}")
    results = []
    for sid in sorted(scored_days):
        days = sorted(set(int(d) for d in alert_days.get(sid, ())))
        events = list(labels.get(sid, ()))
        detected, _ = match_events(days, events, margins)
        results.append(SubjectResult(sid, len(events), len(detected), len(days),
                                     int(scored_days[sid])))
    return EvalReport(results, x_percent, margins, pooled_alert_rate, detector)


def write_scored_days(path, scored_days: Mapping[str, int]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "scored_days"])
        for sid in sorted(scored_days):
            w.writerow([sid, int(scored_days[sid])])


def read_scored_days(path) -> dict[str, int]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["subject_id", "scored_days"]:
            raise ValueError(f"{path}: expected header subject_id,scored_days")
        return {row["subject_id"]: int(row["scored_days"]) for row in reader}
