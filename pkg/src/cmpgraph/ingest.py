"""Sensor event parsing, deduplication and daily feature extraction.

Five features are computed per location and day: firing count, early-morning
count (00:00-06:00), late-evening count (18:00-24:00), dwell duration and the
1-Wasserstein drift between today's and yesterday's hourly histograms.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DAY = 86400
HOUR = 3600
FEATURE_KINDS = ("duration", "early_am_count", "late_pm_count", "total_count", "ws_drift")


@dataclass(frozen=True, order=True)
class EventRecord:
    timestamp: int
    location: str
    subject_id: str = ""


@dataclass
class FeatureMatrix:
    subject_id: str
    feature_names: list[str]
    values: np.ndarray  # T x F

    @property
    def n_days(self) -> int:
        return self.values.shape[0]


def feature_names(locations: Iterable[str]) -> list[str]:
    return [f"{loc}.{kind}" for loc, kind in sorted((l, k) for l in locations for k in FEATURE_KINDS)]


def parse_timestamp(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return int(float(text))
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def read_events(path) -> dict[str, list[EventRecord]]:
    """Read an event CSV (``subject_id,timestamp,location``), grouped by subject
    and sorted by time."""
    by_subject: dict[str, list[EventRecord]] = defaultdict(list)
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"subject_id", "timestamp", "location"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                ts = parse_timestamp(row["timestamp"])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad timestamp {row['timestamp']!r}") from exc
            by_subject[row["subject_id"]].append(EventRecord(ts, row["location"], row["subject_id"]))
    return {sid: sorted(evs) for sid, evs in sorted(by_subject.items())}


def write_events(path, events: Iterable[EventRecord]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "timestamp", "location"])
        for ev in events:
            w.writerow([ev.subject_id, ev.timestamp, ev.location])


def _check_sorted(events: Sequence[EventRecord]) -> None:
    for prev, cur in zip(events, events[1:]):
        if cur.timestamp < prev.timestamp:
            raise ValueError(f"events not sorted: {cur.timestamp} follows {prev.timestamp}")


def dedupe(events: Sequence[EventRecord], window: float = 60) -> list[EventRecord]:
    """Drop re-firings of the same sensor.

    An event is dropped when the previous raw event at the same location is at
    most ``window`` seconds earlier, so a sustained burst collapses to its
    first firing.
    """
    _check_sorted(events)
    last_seen: dict[str, int] = {}
    kept = []
    for ev in events:
        prev = last_seen.get(ev.location)
        last_seen[ev.location] = ev.timestamp
        if prev is not None and ev.timestamp - prev <= window:
            continue
        kept.append(ev)
    return kept


def ws_distance(hist_a, hist_b, normalize: bool = True) -> float:
    """1-Wasserstein distance between two 24-bin hourly histograms, in hours.

    With ``normalize`` each histogram is scaled to unit mass and an empty
    histogram counts as uniform; otherwise raw cumulative counts are compared.
    """
    a = np.asarray(hist_a, dtype=np.float64)
    b = np.asarray(hist_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("histograms must be 1-D with equal length")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("histogram bins must be non-negative")
    if normalize:
        a = _unit_mass(a)
        b = _unit_mass(b)
    return float(np.abs(np.cumsum(a) - np.cumsum(b)).sum())


def _unit_mass(h: np.ndarray) -> np.ndarray:
    total = h.sum()
    if total == 0:
        return np.full(h.shape, 1.0 / h.size)
    return h / total


def duration_at_location(day_events: Sequence[EventRecord], location: str, day_end: int,
                         max_dwell: float = 3600) -> float:
    """Seconds attributed to ``location`` within one day.

    Each firing there is credited with the gap until the next event of the day
    (any sensor), capped at ``max_dwell``; the last firing runs to ``day_end``.
    """
    total = 0.0
    for k, ev in enumerate(day_events):
        if ev.location != location:
            continue
        nxt = day_events[k + 1].timestamp if k + 1 < len(day_events) else day_end
        total += min(nxt - ev.timestamp, max_dwell)
    return total


def day_origin(first_timestamp: int, tz_offset: int = 0) -> int:
    """Epoch seconds of the local midnight at or before ``first_timestamp``."""
    local = first_timestamp + tz_offset
    return local - local % DAY - tz_offset


def extract_features(events: Sequence[EventRecord], locations: Sequence[str], n_days: int,
                     origin: int, max_dwell: float = 3600,
                     normalize_ws: bool = True, subject_id: str = "") -> FeatureMatrix:
    """Aggregate deduplicated events into a ``n_days x F`` daily feature matrix.

    ``origin`` is the epoch second of local midnight starting day 0; columns
    follow :func:`feature_names`.
    """
    _check_sorted(events)
    locations = sorted(locations)
    loc_index = {loc: k for k, loc in enumerate(locations)}
    hours = np.zeros((n_days, len(locations), 24))
    per_day: list[list[EventRecord]] = [[] for _ in range(n_days)]
    for ev in events:
        if ev.location not in loc_index:
            raise ValueError(f"unknown location {ev.location!r}")
        offset = ev.timestamp - origin
        day = offset // DAY
        if not 0 <= day < n_days:
            raise ValueError(f"event at {ev.timestamp} falls outside days [0, {n_days})")
        hour = (offset % DAY) // HOUR
        hours[day, loc_index[ev.location], hour] += 1
        per_day[day].append(ev)

    counts = hours.sum(axis=2)
    early = hours[:, :, 0:6].sum(axis=2)
    late = hours[:, :, 18:24].sum(axis=2)
    duration = np.zeros_like(counts)
    drift = np.zeros_like(counts)
    for d in range(n_days):
        day_end = origin + (d + 1) * DAY
        for loc, k in loc_index.items():
            duration[d, k] = duration_at_location(per_day[d], loc, day_end, max_dwell)
            if d > 0:
                drift[d, k] = ws_distance(hours[d, k], hours[d - 1, k], normalize_ws)

    by_kind = {
        "duration": duration,
        "early_am_count": early,
        "late_pm_count": late,
        "total_count": counts,
        "ws_drift": drift,
    }
    names = feature_names(locations)
    cols = []
    for name in names:
        loc, kind = name.split(".", 1)
        cols.append(by_kind[kind][:, loc_index[loc]])
    values = np.stack(cols, axis=1) if cols else np.zeros((n_days, 0))
    return FeatureMatrix(subject_id, names, values)


def write_features_csv(path, fm: FeatureMatrix) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fm.feature_names)
        for row in fm.values:
            w.writerow([repr(float(v)) for v in row])


def read_features_csv(path, subject_id: str = "") -> FeatureMatrix:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return FeatureMatrix(subject_id, names, np.array(rows).reshape(len(rows), len(names)))
