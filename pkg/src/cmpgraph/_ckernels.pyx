# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: subsequence distance matrix, contextual min-pooling
and the sliding-window threshold scan."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def znorm_subsequences(series, Py_ssize_t m, double flat_std):
    cdef const double[::1] x = np.ascontiguousarray(series, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0] - m + 1
    z_arr = np.zeros((n, m), dtype=np.float64)
    flat_arr = np.zeros(n, dtype=bool)
    cdef double[:, ::1] z = z_arr
    cdef cnp.npy_bool[::1] flat = flat_arr
    cdef Py_ssize_t i, k
    cdef double mu, var, sd
    for i in range(n):
        mu = 0.0
        for k in range(m):
            mu += x[i + k]
        mu /= m
        var = 0.0
        for k in range(m):
            var += (x[i + k] - mu) * (x[i + k] - mu)
        sd = sqrt(var / m)
        if sd < flat_std:
            flat[i] = True
            continue
        for k in range(m):
            z[i, k] = (x[i + k] - mu) / sd
    return z_arr, flat_arr


def distance_matrix(series, Py_ssize_t m, double flat_std):
    z_arr, flat_arr = znorm_subsequences(series, m, flat_std)
    cdef double[:, ::1] z = z_arr
    cdef cnp.npy_bool[::1] flat = flat_arr
    cdef Py_ssize_t n = z.shape[0]
    d_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] d = d_arr
    cdef double worst = 2.0 * sqrt(<double>m)
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(i + 1, n):
            if flat[i] != flat[j]:
                acc = worst
            else:
                acc = 0.0
                for k in range(m):
                    diff = z[i, k] - z[j, k]
                    acc += diff * diff
                acc = sqrt(acc)
                if acc > worst:
                    acc = worst
            d[i, j] = acc
            d[j, i] = acc
    return d_arr


def context_min_pool(D, Py_ssize_t c, Py_ssize_t exclusion, double fill):
    cdef const double[:, ::1] d = np.ascontiguousarray(D, dtype=np.float64)
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t n_ctx = (n + c - 1) // c
    out_arr = np.full((n_ctx, n_ctx), INFINITY, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, a, b, gap
    cdef double v
    for i in range(n):
        a = i // c
        for j in range(n):
            gap = i - j if i >= j else j - i
            if gap < exclusion:
                continue
            b = j // c
            v = d[i, j]
            if v < out[a, b]:
                out[a, b] = v
    for a in range(n_ctx):
        for b in range(n_ctx):
            if out[a, b] == INFINITY:
                out[a, b] = fill
    return out_arr


cdef inline void _window_stats(const double[::1] buf, Py_ssize_t lo, Py_ssize_t hi,
                               double* mu, double* sd) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, v = 0.0
    cdef Py_ssize_t cnt = hi - lo
    for k in range(lo, hi):
        s += buf[k]
    s /= cnt
    for k in range(lo, hi):
        v += (buf[k] - s) * (buf[k] - s)
    mu[0] = s
    sd[0] = sqrt(v / cnt)


def rolling_threshold(scores, Py_ssize_t window, double n_std, Py_ssize_t min_fill,
                      double eps, bint mask_alerts):
    cdef const double[::1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    alert_arr = np.zeros(n, dtype=bool)
    thresh_arr = np.full(n, np.nan, dtype=np.float64)
    cdef cnp.npy_bool[::1] alert = alert_arr
    cdef double[::1] thresh = thresh_arr
    kept_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] kept = kept_arr
    cdef Py_ssize_t t, lo, n_kept = 0
    cdef double mu, sd
    for t in range(n):
        if mask_alerts:
            if n_kept >= min_fill:
                lo = n_kept - window if n_kept > window else 0
                _window_stats(kept, lo, n_kept, &mu, &sd)
                if sd < eps:
                    sd = eps
                thresh[t] = mu + n_std * sd
                alert[t] = s[t] > thresh[t]
            if not alert[t]:
                kept[n_kept] = s[t]
                n_kept += 1
        elif t >= min_fill:
            lo = t - window if t > window else 0
            _window_stats(s, lo, t, &mu, &sd)
            if sd < eps:
                sd = eps
            thresh[t] = mu + n_std * sd
            alert[t] = s[t] > thresh[t]
    return alert_arr, thresh_arr
