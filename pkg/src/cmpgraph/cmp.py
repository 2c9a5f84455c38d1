"""Z-normalized subsequence distances and the Contextual Matrix Profile.

A CMP cell ``M[a, b]`` is the smallest z-normalized Euclidean distance
between any subsequence starting in context ``a`` and any subsequence
starting in context ``b``. Contexts are consecutive blocks of ``c``
subsequence start indices; a short trailing block forms the last context.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._backend import kernels

#: Subsequences whose standard deviation falls below this are "flat".
FLAT_STD = 1e-12
ENTROPY_BINS = 16
#: Profile entries with correlation above ``1 - NEAR_MATCH`` are recomputed exactly.
NEAR_MATCH = 1e-4


def max_distance(m: int) -> float:
    return 2.0 * np.sqrt(m)


@dataclass(frozen=True)
class CmpConfig:
    subsequence_length: int = 3
    context_length: int = 3
    exclusion: int | None = None  # defaults to subsequence_length
    bin_count: int | None = None

    def __post_init__(self):
        if self.subsequence_length < 2:
            raise ValueError("subsequence_length must be >= 2")
        if self.context_length < 1:
            raise ValueError("context_length must be >= 1")
        if self.bin_count is not None and self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")

    @property
    def exclusion_zone(self) -> int:
        return self.subsequence_length if self.exclusion is None else self.exclusion


@dataclass
class Cmp:
    """Per-feature CMPs stacked as ``matrices[f, a, b]``."""

    matrices: np.ndarray
    feature_names: list[str]
    config: CmpConfig

    @property
    def n_features(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_contexts(self) -> int:
        return self.matrices.shape[1]


def znorm_distance(a, b) -> float:
    """Euclidean distance between z-normalized copies of ``a`` and ``b``.

    Flat inputs: 0 against another flat sequence, ``2*sqrt(m)`` otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    m = a.shape[0]
    sa, sb = a.std(), b.std()
    flat_a, flat_b = sa < FLAT_STD, sb < FLAT_STD
    if flat_a or flat_b:
        return 0.0 if flat_a and flat_b else max_distance(m)
    za = (a - a.mean()) / sa
    zb = (b - b.mean()) / sb
    return float(min(np.sqrt(np.sum((za - zb) ** 2)), max_distance(m)))


def sliding_dot_product(query: np.ndarray, series: np.ndarray) -> np.ndarray:
    """Dot product of ``query`` with every length-m window of ``series`` via FFT."""
    n, m = series.shape[0], query.shape[0]
    size = 1 << int(np.ceil(np.log2(n + m)))
    prod = np.fft.irfft(np.fft.rfft(series, size) * np.fft.rfft(query[::-1], size), size)
    return prod[m - 1:n]


def distance_profile_fft(series, query) -> np.ndarray:
    """Distance from ``query`` to every subsequence of ``series`` (MASS)."""
    series = np.asarray(series, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    n, m = series.shape[0], query.shape[0]
    if m > n:
        raise ValueError(f"query length {m} exceeds series length {n}")
    worst = max_distance(m)
    windows = sliding_window_view(series, m)
    mu_t = windows.mean(axis=1)
    sd_t = windows.std(axis=1)
    flat_t = sd_t < FLAT_STD
    sd_q = query.std()
    if sd_q < FLAT_STD:
        return np.where(flat_t, 0.0, worst)
    qt = sliding_dot_product(query, series)
    rho = (qt - m * query.mean() * mu_t) / (m * sd_q * np.where(flat_t, 1.0, sd_t))
    rho = np.clip(rho, -1.0, 1.0)
    d2 = 2.0 * m * (1.0 - rho)
    profile = np.sqrt(d2)
    # sqrt amplifies FFT round-off near zero; recompute close matches directly
    near = np.flatnonzero((d2 < 2.0 * m * NEAR_MATCH) & ~flat_t)
    if near.size:
        zq = (query - query.mean()) / sd_q
        zw = (windows[near] - mu_t[near, None]) / sd_t[near, None]
        profile[near] = np.sqrt(((zw - zq) ** 2).sum(axis=1))
    profile[flat_t] = worst
    return np.minimum(profile, worst)


def distance_profile_naive(series, query) -> np.ndarray:
    """O(nm) reference: ``znorm_distance`` against every window."""
    series = np.asarray(series, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    m = query.shape[0]
    if m > series.shape[0]:
        raise ValueError("query longer than series")
    return np.array([znorm_distance(query, w) for w in sliding_window_view(series, m)])


def full_distance_matrix(series, m: int) -> np.ndarray:
    """Self-join distance matrix over all length-m subsequences."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or series.shape[0] < m:
        raise ValueError(f"need a 1-D series of length >= {m}")
    return kernels.distance_matrix(series, int(m), FLAT_STD)


def contextual_min_pool(D: np.ndarray, config: CmpConfig) -> np.ndarray:
    """Min-pool ``D`` over context blocks, skipping trivial matches.

    Cells whose every pair is excluded take the maximum distance.
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    return kernels.context_min_pool(
        D, config.context_length, config.exclusion_zone, max_distance(config.subsequence_length)
    )


def bin_cmp(M: np.ndarray, bin_count: int) -> np.ndarray:
    """Quantize entries into equal-width bins and snap to bin midpoints.

    Bins are closed on the right, ``(lo + k*w, lo + (k+1)*w]``, with the
    minimum itself in the first bin; a value on an inner edge falls into the
    lower bin.
    """
    if bin_count < 2:
        raise ValueError("bin_count must be >= 2")
    M = np.asarray(M, dtype=np.float64)
    lo, hi = M.min(), M.max()
    if hi <= lo:
        return M.copy()
    width = (hi - lo) / bin_count
    idx = np.clip(np.ceil((M - lo) / width) - 1, 0, bin_count - 1)
    return lo + (idx + 0.5) * width


def cmp_energy(M: np.ndarray) -> float:
    """Frobenius norm of a CMP (sub)matrix."""
    return float(np.sqrt(np.sum(np.square(M, dtype=np.float64))))


def cmp_entropy(M: np.ndarray, m: int = 3, bins: int = ENTROPY_BINS) -> float:
    """Shannon entropy (nats) of the off-diagonal upper-triangle values,
    histogrammed over ``[0, 2*sqrt(m)]``."""
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        raise ValueError("empty submatrix")
    vals = M[np.triu_indices(M.shape[0], k=1)]
    if vals.size == 0:
        return 0.0
    counts = _entropy_histogram(vals, m, bins)
    p = counts[counts > 0] / vals.size
    return float(-(p * np.log(p)).sum())


def _entropy_histogram(vals: np.ndarray, m: int, bins: int) -> np.ndarray:
    hi = max_distance(m)
    idx = np.clip(np.floor(vals / hi * bins), 0, bins - 1).astype(np.intp)
    return np.bincount(idx, minlength=bins)


def prefix_energies(M: np.ndarray) -> np.ndarray:
    """``cmp_energy(M[:i+1, :i+1])`` for every i, in O(C^2)."""
    sq = np.square(np.asarray(M, dtype=np.float64))
    C = sq.shape[0]
    out = np.empty(C)
    total = 0.0
    for i in range(C):
        # new row and column i, diagonal counted once
        total += sq[i, :i].sum() + sq[:i, i].sum() + sq[i, i]
        out[i] = np.sqrt(total)
    return out


def prefix_entropies(M: np.ndarray, m: int = 3, bins: int = ENTROPY_BINS) -> np.ndarray:
    """``cmp_entropy(M[:i+1, :i+1])`` for every i, incrementally."""
    M = np.asarray(M, dtype=np.float64)
    C = M.shape[0]
    counts = np.zeros(bins, dtype=np.int64)
    out = np.zeros(C)
    for i in range(1, C):
        counts += _entropy_histogram(M[:i, i], m, bins)
        n = counts.sum()
        p = counts[counts > 0] / n
        out[i] = -(p * np.log(p)).sum()
    return out


def compute_cmp(features: np.ndarray, feature_names: list[str], config: CmpConfig) -> Cmp:
    """Per-column CMPs of a ``T x F`` feature matrix, binned if configured."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be a T x F matrix")
    mats = []
    for f in range(features.shape[1]):
        D = full_distance_matrix(features[:, f], config.subsequence_length)
        M = contextual_min_pool(D, config)
        if config.bin_count is not None:
            M = bin_cmp(M, config.bin_count)
        mats.append(M)
    return Cmp(np.stack(mats), list(feature_names), config)


def write_cmp_csv(path, M: np.ndarray, m: int) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# subsequence_length={m}\n")
        w = csv.writer(fh)
        for row in M:
            w.writerow([repr(float(v)) for v in row])


def read_cmp_csv(path) -> tuple[np.ndarray, int | None]:
    """Read a CMP CSV; returns the matrix and the recorded subsequence length."""
    m = None
    rows = []
    with Path(path).open(newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key == "subsequence_length":
                    m = int(val)
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}: non-numeric CMP cell") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError(f"{path}: CMP CSV must hold a non-empty square matrix")
    return np.array(rows), m


def to_pgm(M: np.ndarray, m: int) -> bytes:
    """8-bit binary PGM; 0 maps to black and ``2*sqrt(m)`` to white."""
    M = np.asarray(M, dtype=np.float64)
    pix = np.clip(np.rint(M / max_distance(m) * 255.0), 0, 255).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    header, rest = data.split(b"\n", 3)[:3], data.split(b"\n", 3)[3]
    if header[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in header[1].split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w)
