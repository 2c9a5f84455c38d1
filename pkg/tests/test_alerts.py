import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmpgraph.alerts import (ThresholdConfig, read_alerts_csv, threshold, threshold_mask,
                             write_alerts_csv)
from cmpgraph.series import ScoreSeries


def naive(scores, w, k, fill):
    s = list(map(float, scores))
    out = []
    for t in range(len(s)):
        prev = s[max(0, t - w):t]
        if len(prev) < fill:
            out.append(False)
            continue
        mu = sum(prev) / len(prev)
        sd = max((sum((v - mu) ** 2 for v in prev) / len(prev)) ** 0.5, 1e-12)
        out.append(s[t] > mu + k * sd)
    return np.array(out)


def test_constant_window_then_jump():
    alert, th = threshold_mask([1] * 7 + [5], ThresholdConfig(window=7))
    assert alert.tolist() == [False] * 7 + [True]
    assert th[-1] == pytest.approx(1.0)
    assert np.all(np.isnan(th[:7]))


def test_hand_computed_threshold():
    alert, th = threshold_mask([1, 2, 3, 2, 1, 2, 3, 3], ThresholdConfig(window=7))
    assert th[-1] == pytest.approx(2 + np.sqrt(4 / 7), abs=1e-12)
    assert th[-1] == pytest.approx(2.7559, abs=1e-4)
    assert alert[-1] and not alert[:-1].any()


def test_decreasing_scores_never_alert():
    alert, _ = threshold_mask(np.linspace(10, 0, 200), ThresholdConfig(window=7, min_fill=1))
    assert not alert.any()


@pytest.mark.parametrize("n,w,fill", [(50, 7, None), (500, 2, 1), (10_000, 7, None), (300, 20, 5)])
def test_matches_naive(rng, n, w, fill):
    s = rng.gamma(2.0, size=n)
    s[rng.integers(0, n, 5)] += 10
    cfg = ThresholdConfig(window=w, min_fill=fill)
    alert, _ = threshold_mask(s, cfg)
    assert np.array_equal(alert, naive(s, w, 1.0, cfg.fill))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=8, max_size=60),
       st.floats(0.5, 20), st.floats(0.5, 50))
def test_scale_and_shift_invariance(values, scale, shift):
    s = np.round(np.array(values), 3)
    cfg = ThresholdConfig()
    base, _ = threshold_mask(s, cfg)
    # ties within round-off can flip either way; only compare clear decisions
    _, th = threshold_mask(s, cfg)
    clear = np.isnan(th) | (np.abs(s - th) > 1e-6 * (1 + np.abs(th)))
    scaled, _ = threshold_mask(s * scale, cfg)
    shifted, _ = threshold_mask(s + shift, cfg)
    assert np.array_equal(base[clear], scaled[clear])
    assert np.array_equal(base[clear], shifted[clear])


def test_masking_flag_changes_later_windows():
    s = [1.0] * 7 + [10.0] * 12
    plain, _ = threshold_mask(s, ThresholdConfig())
    masked, _ = threshold_mask(s, ThresholdConfig(mask_alerts=True))
    assert masked.sum() > plain.sum()


def test_threshold_maps_to_days_and_roundtrips(tmp_path):
    series = ScoreSeries("s01", np.arange(2, 12), [1.0] * 8 + [9.0, 1.0], "gnn")
    a = threshold(series, context_length=3)
    assert a.context_indices.tolist() == [10] and a.day_indices.tolist() == [30]
    assert a.thresholds[0] == pytest.approx(1.0)
    path = tmp_path / "alerts.csv"
    write_alerts_csv(path, [a])
    back = read_alerts_csv(path)["s01"]
    assert back.day_indices.tolist() == [30] and back.scores.tolist() == [9.0]
    assert back.detector == "gnn"
    path.write_text("a,b\n")
    with pytest.raises(ValueError):
        read_alerts_csv(path)


@pytest.mark.parametrize("kw", [dict(window=1), dict(n_std=0.0), dict(min_fill=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ThresholdConfig(**kw)
