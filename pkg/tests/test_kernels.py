"""Both kernel backends against brute-force oracles and each other."""

import math

import numpy as np
import pytest

from conftest import BACKENDS

FLAT = 1e-12


def naive_znorm_dist(a, b):
    m = len(a)
    sa, sb = np.std(a), np.std(b)
    if sa < FLAT and sb < FLAT:
        return 0.0
    if sa < FLAT or sb < FLAT:
        return 2 * math.sqrt(m)
    za = (a - a.mean()) / sa
    zb = (b - b.mean()) / sb
    return min(float(np.sqrt(((za - zb) ** 2).sum())), 2 * math.sqrt(m))


def naive_min_pool(D, c, excl, fill):
    n = D.shape[0]
    C = -(-n // c)
    M = np.full((C, C), fill)
    for a in range(C):
        for b in range(C):
            best = None
            for i in range(a * c, min((a + 1) * c, n)):
                for j in range(b * c, min((b + 1) * c, n)):
                    if abs(i - j) < excl:
                        continue
                    best = D[i, j] if best is None else min(best, D[i, j])
            if best is not None:
                M[a, b] = best
    return M


def naive_threshold(s, w, k, fill, eps=1e-12):
    alert = np.zeros(len(s), bool)
    thr = np.full(len(s), np.nan)
    for t in range(len(s)):
        prev = s[max(0, t - w):t]
        if len(prev) < fill:
            continue
        mu = sum(prev) / len(prev)
        sd = math.sqrt(sum((x - mu) ** 2 for x in prev) / len(prev))
        thr[t] = mu + k * max(sd, eps)
        alert[t] = s[t] > thr[t]
    return alert


def test_distance_matrix_matches_pairwise(kernels, rng):
    x = rng.normal(size=10)
    D = kernels.distance_matrix(x, 3, FLAT)
    n = 8
    oracle = np.array([[naive_znorm_dist(x[i:i + 3], x[j:j + 3]) for j in range(n)] for i in range(n)])
    assert np.allclose(D, oracle, atol=1e-12)
    assert np.all(np.diag(D) == 0.0)
    assert np.array_equal(D, D.T)


def test_distance_matrix_flat_rule(kernels):
    x = np.array([1.0, 1, 1, 1, 2, 3, 1, 1, 1])
    D = kernels.distance_matrix(x, 3, FLAT)
    assert D[0, 1] == 0.0  # flat vs flat
    assert D[0, 3] == pytest.approx(2 * math.sqrt(3))  # flat vs non-flat


def test_min_pool_explicit_block(kernels):
    D = np.full((4, 4), 9.0)
    D[0:2, 2:4] = [[5, 2], [4, 7]]
    D[2:4, 0:2] = D[0:2, 2:4].T
    M = kernels.context_min_pool(D, 2, 1, 10.0)
    assert M[0, 1] == 2.0 and M[1, 0] == 2.0


@pytest.mark.parametrize("n,c,excl", [(20, 3, 3), (31, 4, 2), (7, 3, 0), (12, 5, 6)])
def test_min_pool_oracle(kernels, rng, n, c, excl):
    A = rng.random((n, n))
    D = (A + A.T) / 2
    np.fill_diagonal(D, 0.0)
    assert np.array_equal(kernels.context_min_pool(D, c, excl, 7.0), naive_min_pool(D, c, excl, 7.0))


def test_threshold_oracle(kernels, rng):
    for _ in range(50):
        s = rng.normal(size=60)
        alert, thr = kernels.rolling_threshold(s, 7, 1.0, 7, 1e-12, False)
        assert np.array_equal(alert, naive_threshold(s, 7, 1.0, 7))
        assert np.all(np.isnan(thr[:7]))


def test_threshold_min_fill(kernels):
    s = np.array([1.0, 1.0, 1.0, 9.0])
    alert, _ = kernels.rolling_threshold(s, 7, 1.0, 3, 1e-12, False)
    assert alert.tolist() == [False, False, False, True]


def test_threshold_masking_drops_alerted_scores(kernels):
    s = np.array([1.0, 2, 1, 2, 1, 2, 1] + [50.0] * 6)
    plain, _ = kernels.rolling_threshold(s, 7, 1.0, 7, 1e-12, False)
    masked, _ = kernels.rolling_threshold(s, 7, 1.0, 7, 1e-12, True)
    # masked windows keep the pre-spike baseline, plain ones absorb the spike
    assert masked[7:].all()
    assert plain[7] and not plain[7:].all()


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_backends_agree(rng):
    (_, py), (_, cy) = BACKENDS
    for _ in range(20):
        x = np.round(rng.normal(size=40), 2)
        x[5:12] = 0.0
        Dp, Dc = py.distance_matrix(x, 3, FLAT), cy.distance_matrix(x, 3, FLAT)
        assert np.allclose(Dp, Dc, atol=1e-12)
        assert np.array_equal(py.context_min_pool(Dp, 3, 3, 9.0), cy.context_min_pool(Dp, 3, 3, 9.0))
        s = rng.normal(size=100)
        for mask in (False, True):
            ap, tp = py.rolling_threshold(s, 7, 1.0, 7, 1e-12, mask)
            ac, tc = cy.rolling_threshold(s, 7, 1.0, 7, 1e-12, mask)
            assert np.array_equal(ap, ac)
            assert np.allclose(tp, tc, equal_nan=True, rtol=0, atol=1e-12)


def test_backend_selection_env(monkeypatch):
    import importlib
    import cmpgraph._backend as backend
    monkeypatch.setenv("CMPGRAPH_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(backend)
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("CMPGRAPH_PURE_PYTHON")
        importlib.reload(backend)
