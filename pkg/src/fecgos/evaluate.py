"""Scoring of beat detections and waveform-morphology recovery.

Beat lists are compared by greedy chronological matching inside a fixed
window; F1 and mean absolute timing error are computed over the matched
pairs. Morphology recovery is scored by normalized amplitude errors at
P/R/T landmarks and normalized duration errors of PR/QT/ST intervals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .records import PeakList


@dataclass(frozen=True)
class MatchResult:
    pairs: list  # (truth_time, detected_time) ms
    fp: int
    fn: int

    @property
    def tp(self) -> int:
        return len(self.pairs)


def match_peaks(truth: PeakList, detected: PeakList, window_ms: float = 50.0) -> MatchResult:
    """Greedy chronological one-to-one matching.

    Truth peaks are walked in order; each is paired with the nearest
    still-unmatched detection within the window (ties to the earlier
    detection). Unpaired truth peaks are FN, unpaired detections FP.
    """
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    det = detected.times
    used = np.zeros(len(det), dtype=bool)
    pairs = []
    for t in truth.times:
        cand = np.where(~used & (np.abs(det - t) <= window_ms))[0]
        if cand.size == 0:
            continue
        dists = np.abs(det[cand] - t)
        j = cand[int(np.argmin(dists))]  # argmin takes the first, i.e. earlier, tie
        used[j] = True
        pairs.append((float(t), float(det[j])))
    fn = len(truth) - len(pairs)
    fp = int(np.sum(~used))
    return MatchResult(pairs=pairs, fp=fp, fn=fn)


def f1(match: MatchResult) -> float:
    """F1 = 2 TP / (2 TP + FN + FP)."""
    denom = 2 * match.tp + match.fn + match.fp
    if denom == 0:
        raise ValueError("F1 undefined: no truth or detected peaks")
    return 2 * match.tp / denom


def mae(match: MatchResult) -> float:
    """Mean absolute timing error (ms) over matched pairs only."""
    if not match.pairs:
        raise ValueError("MAE undefined: no matched pairs")
    return float(np.mean([abs(t - d) for t, d in match.pairs]))


def _extremum_abs(x, a, b):
    """Index of the largest |value| in x[a:b], or None for degenerate windows."""
    if a >= b:
        return None
    seg = x[a:b]
    if np.ptp(seg) == 0:
        return None
    return a + int(np.argmax(np.abs(seg)))


def _minimum(x, a, b):
    if a >= b:
        return None
    return a + int(np.argmin(x[a:b]))


def detect_pt(fecg, fs: float, rpeaks: PeakList) -> dict:
    """Locate P, Q, S and T landmarks around each given R peak.

    Per cycle: P is the largest-magnitude extremum in [R-250, R-60] ms,
    Q the minimum in [R-60, R-10], S the minimum in [R+10, R+60], T the
    largest-magnitude extremum in [R+80, R+min(400, 0.6*RR)]. Windows
    clipped away at record boundaries, or flat windows, yield no landmark
    for that cycle.
    """
    x = np.asarray(fecg, dtype=float)
    if len(rpeaks) < 2:
        raise ValueError("need at least 2 R peaks")
    idx = rpeaks.to_samples(fs)
    rr_ms = np.empty(len(idx))
    rr_ms[:-1] = np.diff(rpeaks.times)
    rr_ms[-1] = rr_ms[-2]

    def ms(v):
        return int(round(v * fs / 1000.0))

    out = {"p": [], "q": [], "s": [], "t": []}
    for r, rr in zip(idx, rr_ms):
        p = _extremum_abs(x, max(0, r - ms(250)), max(0, r - ms(60)) + 1)
        q = _minimum(x, max(0, r - ms(60)), max(0, r - ms(10)) + 1)
        s = _minimum(x, min(len(x), r + ms(10)), min(len(x), r + ms(60) + 1))
        t_hi = r + ms(min(400.0, 0.6 * rr))
        t = _extremum_abs(x, min(len(x), r + ms(80)), min(len(x), t_hi + 1))
        for key, v in (("p", p), ("q", q), ("s", s), ("t", t)):
            if v is not None:
                out[key].append(v)
    result = {}
    for key, vals in out.items():
        vals = sorted(set(vals))
        result[key] = PeakList.from_samples(np.array(vals, dtype=int), fs)
    return result


def _sample_at(x, t_ms, fs):
    i = int(round(t_ms * fs / 1000.0))
    return x[min(max(i, 0), len(x) - 1)]


def nmae(truth_signal, est_signal, pairs, fs: float) -> float:
    """Normalized mean amplitude error over matched landmark pairs.

    pairs: (truth_time_ms, est_time_ms). Amplitudes are read off the two
    signals at the respective timestamps; pairs with zero truth amplitude
    are excluded with a warning.
    """
    zt = np.asarray(truth_signal, dtype=float)
    ze = np.asarray(est_signal, dtype=float)
    errs = []
    for t, d in pairs:
        a = _sample_at(zt, t, fs)
        if a == 0:
            warnings.warn(f"zero truth amplitude at {t} ms; pair excluded from NMAE")
            continue
        errs.append(abs(a - _sample_at(ze, d, fs)) / abs(a))
    if not errs:
        raise ValueError("NMAE undefined: no usable pairs")
    return float(np.mean(errs))


def nmde(truth_intervals, est_intervals) -> float:
    """Normalized mean duration error over matched beats."""
    ti = np.asarray(truth_intervals, dtype=float)
    ei = np.asarray(est_intervals, dtype=float)
    if ti.shape != ei.shape or ti.size == 0:
        raise ValueError("interval lists must be non-empty and equal length")
    ok = ti != 0
    if not np.all(ok):
        warnings.warn("zero-length truth interval(s) excluded from NMDE")
    if not np.any(ok):
        raise ValueError("NMDE undefined: all truth intervals are zero")
    return float(np.mean(np.abs(ti[ok] - ei[ok]) / ti[ok]))


@dataclass(frozen=True)
class EvalReport:
    per_recording: dict
    aggregates: dict
    quantile_rows: dict = field(default_factory=dict)


def _quantile(values, alpha):
    return float(np.quantile(np.asarray(values, dtype=float), alpha))


def _summary(values):
    v = np.asarray(values, dtype=float)
    return {
        "mean": float(np.mean(v)),
        "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
        "median": float(np.median(v)),
    }


def aggregate(per_combination_scores: dict, alphas=(0.5, 1.0)) -> EvalReport:
    """Summarize per-recording metric lists over channel combinations.

    per_combination_scores maps recording -> {metric: [score per
    combination]}. For each recording and alpha, metric(alpha) is the
    alpha-quantile over its combinations; aggregates report mean, sd and
    median of those across recordings.
    """
    if not per_combination_scores:
        raise ValueError("no recordings to aggregate")
    quantile_rows = {}
    aggregates = {}
    metrics = sorted({m for rec in per_combination_scores.values() for m in rec})
    for metric in metrics:
        for alpha in alphas:
            per_rec = {
                rec: _quantile(scores[metric], alpha)
                for rec, scores in per_combination_scores.items()
                if metric in scores and len(scores[metric])
            }
            key = f"{metric}({alpha:g})"
            quantile_rows[key] = per_rec
            aggregates[key] = _summary(list(per_rec.values()))
    return EvalReport(
        per_recording={k: dict(v) for k, v in per_combination_scores.items()},
        aggregates=aggregates,
        quantile_rows=quantile_rows,
    )


def optimal_match_size(truth: PeakList, detected: PeakList, window_ms: float) -> int:
    """Maximum-cardinality matching size by exhaustive search (small lists only).

    Independent oracle used to validate the greedy matcher in tests.
    """
    t = list(truth.times)
    d = list(detected.times)
    if len(t) > 12 or len(d) > 12:
        raise ValueError("oracle is exponential; use lists of <= 12 peaks")

    def best(i, used):
        if i == len(t):
            return 0
        # skip truth i
        score = best(i + 1, used)
        for j in range(len(d)):
            if not used & (1 << j) and abs(t[i] - d[j]) <= window_ms:
                score = max(score, 1 + best(i + 1, used | (1 << j)))
        return score

    return best(0, 0)
