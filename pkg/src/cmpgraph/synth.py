"""Seeded synthetic household PIR cohorts with injected episodes.

Each subject gets per-location daily firing rates (subject scale, weekly
modulation, day-level gamma noise) spread over a fixed 24-hour intensity
profile. During an episode the night-time intensities (00:00-06:00 and
18:00-24:00) of every location are multiplied by that location's anomaly
multiplier, extra "wandering" firings are spread over 00:00-06:00, and the
whole profile can optionally be rotated by a few hours. The labels are
episode start days.

None of the generator constants come from real data; they are chosen so that
episodes are visible in the daily features while normal days stay noisy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import DAY, HOUR, EventRecord, write_events

DEFAULT_ORIGIN = 1609459200  # 2021-01-01T00:00:00Z

# relative hourly intensities, index = hour of day
HOURLY_PROFILES = {
    "kitchen": [0.002, 0.001, 0.001, 0.001, 0.001, 0.005, 1.0, 3.0, 4.0, 2.5, 1.5, 1.5,
                3.0, 2.5, 1.0, 1.0, 1.5, 3.0, 3.5, 2.5, 1.5, 1.0, 0.5, 0.3],
    "bathroom": [0.4, 0.4, 0.3, 0.3, 0.3, 0.5, 2.0, 3.5, 2.5, 1.0, 0.8, 0.8,
                 1.0, 0.8, 0.8, 0.8, 0.8, 1.0, 1.2, 1.5, 2.0, 2.5, 2.0, 1.0],
    "bedroom": [0.6, 0.5, 0.5, 0.5, 0.5, 0.8, 2.0, 2.5, 1.5, 0.5, 0.3, 0.3,
                0.3, 0.5, 0.5, 0.3, 0.3, 0.3, 0.5, 0.8, 1.5, 2.5, 3.0, 1.5],
    "lounge": [0.001, 0.001, 0.001, 0.001, 0.001, 0.002, 0.3, 0.8, 1.5, 2.5, 3.0, 2.5,
               2.0, 2.5, 3.0, 3.0, 2.5, 2.5, 3.0, 3.5, 3.0, 2.0, 1.0, 0.3],
}
NIGHT_HOURS = np.r_[0:6, 18:24]
EARLY_HOURS = np.arange(0, 6)


@dataclass(frozen=True)
class CohortSpec:
    n_subjects: int = 10
    n_days: int = 365
    locations: tuple[str, ...] = ("bathroom", "bedroom", "kitchen", "lounge")
    episodes_per_subject: int = 5
    episode_length_days: int = 5
    base_rates: dict[str, float] = field(default_factory=lambda: {
        "bathroom": 25.0, "bedroom": 30.0, "kitchen": 40.0, "lounge": 35.0})
    anomaly_multipliers: dict[str, float] = field(default_factory=lambda: {
        "bathroom": 3.0, "bedroom": 2.5, "kitchen": 3.0, "lounge": 3.0})
    wander_rates: dict[str, float] = field(default_factory=lambda: {
        "bathroom": 1.0, "bedroom": 1.0, "kitchen": 3.0, "lounge": 3.0})
    profile_shift_hours: int = 0
    warmup_days: int = 30
    min_gap_days: int = 14
    day_noise_shape: float = 16.0
    seed: int = 0
    origin: int = DEFAULT_ORIGIN

    def validate(self) -> None:
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.n_days < 60:
            raise ValueError("n_days must be >= 60")
        if not self.locations:
            raise ValueError("locations must not be empty")
        if self.episodes_per_subject < 0:
            raise ValueError("episodes_per_subject must be >= 0")
        if self.episode_length_days < 1:
            raise ValueError("episode_length_days must be >= 1")
        for name in ("base_rates", "anomaly_multipliers", "wander_rates"):
            table = getattr(self, name)
            missing = [loc for loc in self.locations if loc not in table]
            if missing:
                raise ValueError(f"{name} missing locations {missing}")
            if any(table[loc] < 0 for loc in self.locations):
                raise ValueError(f"{name} must be non-negative")
        unknown = [loc for loc in self.locations if loc not in HOURLY_PROFILES]
        if unknown:
            raise ValueError(f"locations without an hourly profile: {unknown}")
        if not 0 <= self.warmup_days < self.n_days:
            raise ValueError("warmup_days must lie in [0, n_days)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class GroundTruth:
    subject_id: str
    labels: list[int]
    extents: list[tuple[int, int]]  # [start, stop) days

    def episode_days(self) -> np.ndarray:
        days = [d for start, stop in self.extents for d in range(start, stop)]
        return np.array(days, dtype=int)


def subject_ids(n: int) -> list[str]:
    width = max(2, len(str(n - 1)))
    return [f"s{k:0{width}d}" for k in range(n)]


def place_episodes(spec: CohortSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Non-overlapping episode extents after the warm-up period.

    Starts are drawn uniformly over all admissible configurations: pick
    ``k`` distinct slots from a compressed range, then spread them by the
    minimum start-to-start spacing.
    """
    k = spec.episodes_per_subject
    if k == 0:
        return []
    L = spec.episode_length_days
    spacing = L + spec.min_gap_days
    n_slots = spec.n_days - L - spec.warmup_days + 1 - (k - 1) * (spacing - 1)
    if n_slots < k:
        raise ValueError("cannot place episodes_per_subject non-overlapping episodes after the "
                         "warm-up; reduce episodes_per_subject, min_gap_days or warmup_days")
    slots = np.sort(rng.choice(n_slots, size=k, replace=False))
    starts = spec.warmup_days + slots + np.arange(k) * (spacing - 1)
    return [(int(s), int(s) + L) for s in starts]


def generate_subject(spec: CohortSpec, index: int) -> tuple[list[EventRecord], GroundTruth]:
    sid = subject_ids(spec.n_subjects)[index]
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, index)))
    locs = list(spec.locations)
    T = spec.n_days

    extents = place_episodes(spec, rng)
    in_episode = np.zeros(T, dtype=bool)
    for start, stop in extents:
        in_episode[start:stop] = True

    scale = rng.uniform(0.6, 1.4, size=len(locs))
    amp = rng.uniform(0.05, 0.2, size=len(locs))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=len(locs))
    dow = np.arange(T) % 7
    weekly = 1.0 + amp[None, :] * np.sin(2.0 * np.pi * dow[:, None] / 7.0 + phase[None, :])
    noise = rng.gamma(spec.day_noise_shape, 1.0 / spec.day_noise_shape, size=(T, len(locs)))
    base = np.array([spec.base_rates[loc] for loc in locs])
    daily = base[None, :] * scale[None, :] * weekly * noise

    profiles = np.array([HOURLY_PROFILES[loc] for loc in locs], dtype=np.float64)
    profiles /= profiles.sum(axis=1, keepdims=True)
    boosted = np.roll(profiles, spec.profile_shift_hours, axis=1)
    mult = np.array([spec.anomaly_multipliers[loc] for loc in locs])
    boosted[:, NIGHT_HOURS] *= mult[:, None]

    intensity = np.where(in_episode[:, None, None], boosted[None], profiles[None])
    lam = daily[:, :, None] * intensity
    # night wandering: extra early-morning firings on episode days
    wander = np.array([spec.wander_rates[loc] for loc in locs]) / EARLY_HOURS.size
    lam[np.ix_(in_episode, np.arange(len(locs)), EARLY_HOURS)] += wander[None, :, None]
    counts = rng.poisson(lam)

    day_idx, loc_idx, hour = np.nonzero(counts)
    reps = counts[day_idx, loc_idx, hour]
    day_idx = np.repeat(day_idx, reps)
    loc_idx = np.repeat(loc_idx, reps)
    hour = np.repeat(hour, reps)
    ts = spec.origin + day_idx * DAY + hour * HOUR + rng.integers(0, HOUR, size=day_idx.size)
    order = np.lexsort((loc_idx, ts))
    events = [EventRecord(int(ts[k]), locs[loc_idx[k]], sid) for k in order]
    truth = GroundTruth(sid, [start for start, _ in extents], extents)
    return events, truth


def generate_cohort(spec: CohortSpec) -> tuple[dict[str, list[EventRecord]], list[GroundTruth]]:
    spec.validate()
    streams = {}
    truths = []
    for k in range(spec.n_subjects):
        events, truth = generate_subject(spec, k)
        streams[truth.subject_id] = events
        truths.append(truth)
    return streams, truths


def write_labels(path, truths: list[GroundTruth]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "day_index"])
        for gt in truths:
            for day in gt.labels:
                w.writerow([gt.subject_id, day])


def read_labels(path) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"subject_id", "day_index"} <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns subject_id,day_index")
        for row in reader:
            out.setdefault(row["subject_id"], []).append(int(row["day_index"]))
    return out


def write_cohort(directory, spec: CohortSpec) -> tuple[Path, Path]:
    """Generate a cohort and write ``events.csv`` and ``labels.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    streams, truths = generate_cohort(spec)
    events_path = directory / "events.csv"
    labels_path = directory / "labels.csv"
    write_events(events_path, (ev for sid in sorted(streams) for ev in streams[sid]))
    write_labels(labels_path, truths)
    return events_path, labels_path
