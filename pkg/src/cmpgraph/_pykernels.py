"""NumPy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``CMPGRAPH_PURE_PYTHON`` is set. Signatures and results match the
extension; min-pooling is bit-identical, floating-point sums agree to
within rounding.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def znorm_subsequences(series, m, flat_std):
    """Return (Z, flat) where Z holds z-normalized length-m windows."""
    windows = sliding_window_view(np.asarray(series, dtype=np.float64), m)
    mu = windows.mean(axis=1, keepdims=True)
    sigma = np.sqrt(((windows - mu) ** 2).mean(axis=1, keepdims=True))
    flat = sigma[:, 0] < flat_std
    safe = np.where(flat[:, None], 1.0, sigma)
    z = (windows - mu) / safe
    z[flat] = 0.0
    return z, flat


def distance_matrix(series, m, flat_std):
    z, flat = znorm_subsequences(series, m, flat_std)
    diff = z[:, None, :] - z[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    worst = 2.0 * np.sqrt(m)
    mixed = flat[:, None] != flat[None, :]
    d[mixed] = worst
    np.minimum(d, worst, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def context_min_pool(D, c, exclusion, fill):
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    n_ctx = -(-n // c)
    idx = np.arange(n)
    masked = np.where(np.abs(idx[:, None] - idx[None, :]) < exclusion, np.inf, D)
    padded = np.full((n_ctx * c, n_ctx * c), np.inf)
    padded[:n, :n] = masked
    M = padded.reshape(n_ctx, c, n_ctx, c).min(axis=(1, 3))
    M[np.isinf(M)] = fill
    return M


def rolling_threshold(scores, window, n_std, min_fill, eps, mask_alerts):
    s = np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    alert = np.zeros(n, dtype=bool)
    thresh = np.full(n, np.nan)
    if mask_alerts:
        kept = []
        for t in range(n):
            if len(kept) >= min_fill:
                win = np.asarray(kept[-window:])
                mu = win.mean()
                sd = np.sqrt(((win - mu) ** 2).mean())
                thresh[t] = mu + n_std * max(sd, eps)
                alert[t] = s[t] > thresh[t]
            if not alert[t]:
                kept.append(s[t])
        return alert, thresh
    for t in range(min_fill, n):
        win = s[max(0, t - window):t]
        mu = win.mean()
        sd = np.sqrt(((win - mu) ** 2).mean())
        thresh[t] = mu + n_std * max(sd, eps)
        alert[t] = s[t] > thresh[t]
    return alert, thresh
