import numpy as np
import pytest

from fecgos.evaluate import (
    MatchResult,
    aggregate,
    detect_pt,
    f1,
    mae,
    match_peaks,
    nmae,
    nmde,
    optimal_match_size,
)
from fecgos.records import PeakList


def test_match_hand_example():
    m = match_peaks(PeakList(np.array([1000.0, 2000.0])), PeakList(np.array([1010.0, 2500.0])), 50.0)
    assert m.pairs == [(1000.0, 1010.0)]
    assert m.fp == 1 and m.fn == 1


def test_match_identical_lists():
    t = PeakList(np.arange(500.0, 10000.0, 800.0))
    m = match_peaks(t, PeakList(t.times.copy()), 50.0)
    assert m.fp == 0 and m.fn == 0
    assert m.tp == len(t)


def test_match_tie_breaks_to_earlier_detection():
    m = match_peaks(PeakList(np.array([1000.0])), PeakList(np.array([960.0, 1040.0])), 50.0)
    assert m.pairs == [(1000.0, 960.0)]
    assert m.fp == 1


def test_match_rejects_bad_window():
    with pytest.raises(ValueError):
        match_peaks(PeakList(np.array([1.0])), PeakList(np.array([1.0])), 0.0)


def test_greedy_equals_optimal_on_random_instances():
    rng = np.random.default_rng(123)
    window = 50.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        # beat-like truth: gaps wider than the matching window
        gaps = rng.uniform(window + 1.0, 800.0, n)
        truth = 100.0 + np.cumsum(gaps)
        jitter = rng.uniform(-window / 2, window / 2, n)
        det = truth + jitter
        # random misses and far-away false detections
        det = det[rng.random(n) > 0.2]
        extra = truth[-1] + 1000.0 + np.sort(rng.uniform(0, 3000, int(rng.integers(0, 3))))
        det = np.sort(np.concatenate([det, extra]))
        if det.size == 0:
            continue
        tl, dl = PeakList(truth), PeakList(det)
        greedy = match_peaks(tl, dl, window).tp
        assert greedy == optimal_match_size(tl, dl, window)


def test_tp_monotone_in_window():
    rng = np.random.default_rng(77)
    truth = np.sort(rng.uniform(0, 60000, 60))
    det = np.sort(truth + rng.uniform(-40, 40, truth.size))
    tl, dl = PeakList(truth), PeakList(det)
    tps = [match_peaks(tl, dl, w).tp for w in (10.0, 25.0, 50.0)]
    assert tps[0] <= tps[1] <= tps[2]


def test_f1_hand_values():
    assert f1(MatchResult(pairs=[(0.0, 0.0)], fp=1, fn=1)) == 0.5
    assert f1(MatchResult(pairs=[(0.0, 0.0), (1.0, 1.0)], fp=0, fn=0)) == 1.0
    with pytest.raises(ValueError):
        f1(MatchResult(pairs=[], fp=0, fn=0))


def test_mae_hand_values():
    assert mae(MatchResult(pairs=[(1000.0, 1010.0)], fp=0, fn=0)) == 10.0
    assert mae(MatchResult(pairs=[(1.0, 1.0), (2.0, 2.0)], fp=0, fn=0)) == 0.0
    with pytest.raises(ValueError):
        mae(MatchResult(pairs=[], fp=1, fn=1))


def _gauss(t, mu, sd):
    return np.exp(-(((t - mu) / sd) ** 2))


def test_detect_pt_gaussian_bumps():
    fs = 1000.0
    n = 8000
    t = np.arange(n) / fs
    x = np.zeros(n)
    r_times = np.arange(1.0, 7.0, 0.8)
    for r0 in r_times:
        x += _gauss(t, r0 - 0.150, 0.015) * 0.2  # P
        x += _gauss(t, r0, 0.008)  # R
        x += _gauss(t, r0 + 0.250, 0.030) * 0.3  # T
    rp = PeakList(r_times * 1000.0)
    out = detect_pt(x, fs, rp)
    for key, offset in (("p", -150.0), ("t", 250.0)):
        got = out[key].times
        expected = r_times * 1000.0 + offset
        expected = expected[(expected > 0) & (expected < n)]
        assert len(got) == len(expected)
        assert np.max(np.abs(np.sort(got) - expected)) <= 5.0


def test_detect_pt_flat_window_absent():
    fs = 1000.0
    x = np.zeros(5000)
    r = PeakList(np.array([2000.0, 3000.0]))
    x[2000] = 1.0
    x[3000] = 1.0
    out = detect_pt(x, fs, r)
    assert len(out["p"]) == 0  # flat pre-R windows yield no P landmark
    assert len(out["t"]) == 0


def test_detect_pt_needs_two_peaks():
    with pytest.raises(ValueError):
        detect_pt(np.zeros(1000), 1000.0, PeakList(np.array([100.0])))


def test_nmae_identity_zero():
    fs = 1000.0
    z = np.sin(np.arange(4000.0) / 100) + 2.0
    pairs = [(500.0, 500.0), (1500.0, 1500.0)]
    assert nmae(z, z.copy(), pairs, fs) == 0.0


def test_nmae_scaled_signal():
    fs = 1000.0
    z = np.sin(np.arange(4000.0) / 100) + 2.0
    pairs = [(500.0, 500.0), (1500.0, 1500.0), (2500.0, 2500.0)]
    assert nmae(z, 1.1 * z, pairs, fs) == pytest.approx(0.1, rel=1e-9)


def test_nmae_zero_amplitude_excluded():
    fs = 1000.0
    z = np.ones(1000)
    z[100] = 0.0
    with pytest.warns(UserWarning, match="zero truth amplitude"):
        got = nmae(z, 2 * z, [(100.0, 100.0), (200.0, 200.0)], fs)
    assert got == 1.0


def test_nmde_hand_values():
    assert nmde([100.0, 200.0], [100.0, 200.0]) == 0.0
    assert nmde([120.0], [132.0]) == pytest.approx(0.1, rel=1e-12)
    with pytest.raises(ValueError):
        nmde([], [])
    with pytest.raises(ValueError):
        nmde([100.0], [1.0, 2.0])


def test_aggregate_single_combination():
    rep = aggregate({"rec1": {"f1": [0.85]}}, alphas=(0.5, 1.0))
    assert rep.quantile_rows["f1(0.5)"]["rec1"] == 0.85
    assert rep.quantile_rows["f1(1)"]["rec1"] == 0.85


def test_aggregate_quantiles_across_recordings():
    scores = {
        "a": {"f1": [0.8]},
        "b": {"f1": [0.9]},
        "c": {"f1": [1.0]},
    }
    rep = aggregate(scores, alphas=(0.5, 1.0))
    agg = rep.aggregates["f1(1)"]
    assert agg["median"] == 0.9
    assert agg["mean"] == pytest.approx(0.9)
    # quantile of three per-recording values
    vals = sorted(rep.quantile_rows["f1(1)"].values())
    assert vals == [0.8, 0.9, 1.0]


def test_aggregate_alpha_quantile_within_recording():
    rep = aggregate({"a": {"f1": [0.8, 0.9, 1.0]}}, alphas=(0.5, 1.0))
    assert rep.quantile_rows["f1(1)"]["a"] == 1.0
    assert rep.quantile_rows["f1(0.5)"]["a"] == 0.9


def test_aggregate_empty_errors():
    with pytest.raises(ValueError):
        aggregate({})


def test_optimal_oracle_guardrail():
    big = PeakList(np.arange(13.0) * 100)
    with pytest.raises(ValueError, match="12"):
        optimal_match_size(big, big, 50.0)
