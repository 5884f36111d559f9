"""R-peak detection for signals where a second, weaker ECG is superimposed.

The detector tracks the heart rate on a de-shaped spectrogram (a
spectrogram multiplied by an inverted-quefrency cepstral mask, which
suppresses harmonic multiples and leaves the fundamental rate ridge),
then places one beat per expected cycle with the rate as a rhythm prior.
Detections from several candidate signals can be fused by voting.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy import signal as sps

from .records import PeakList

MATERNAL_BAND = (0.5, 2.2)  # Hz
FETAL_BAND = (1.5, 3.3)  # Hz
MIN_SEP_MATERNAL_MS = 250.0
MIN_SEP_FETAL_MS = 200.0


@dataclass(frozen=True)
class DeshapeParams:
    window_s: float = 5.0
    hop_s: float = 0.1
    gamma: float = 0.3
    band: tuple = (0.5, 4.0)


@dataclass(frozen=True)
class TfPlane:
    """Time-frequency magnitude plane restricted to a frequency band."""

    times: np.ndarray  # frame centers, s
    freqs: np.ndarray  # bin centers, Hz
    values: np.ndarray  # (n_freqs, n_frames), >= 0


@dataclass(frozen=True)
class IhrCurve:
    """Instantaneous heart rate (Hz) sampled at spectrogram frame times."""

    times: np.ndarray
    rate: np.ndarray

    def at(self, t):
        return np.interp(t, self.times, self.rate)


def _frame_signal(x, fs, window_s, hop_s):
    win_len = int(round(window_s * fs))
    hop = max(1, int(round(hop_s * fs)))
    if len(x) < win_len:
        raise ValueError("signal shorter than the analysis window")
    starts = np.arange(0, len(x) - win_len + 1, hop)
    idx = starts[:, None] + np.arange(win_len)[None, :]
    frames = x[idx] * np.hanning(win_len)[None, :]
    times = (starts + win_len / 2) / fs
    return frames, times


def _work_rate(x, fs):
    """Decimate to ~64 Hz: the rate band is < 4 Hz and QRS harmonics survive."""
    target = 64
    if fs <= target:
        return np.asarray(x, dtype=float), float(fs)
    g = gcd(int(fs), target)
    y = sps.resample_poly(np.asarray(x, dtype=float), target // g, int(fs) // g, padtype="line")
    return y, float(target)


def _stft_mag(x, fs, params: DeshapeParams):
    xw, wfs = _work_rate(x, fs)
    frames, times = _frame_signal(xw, wfs, params.window_s, params.hop_s)
    nfft = 1 << int(np.ceil(np.log2(frames.shape[1] * 8)))
    mag = np.abs(np.fft.rfft(frames, n=nfft, axis=1))
    freqs = np.fft.rfftfreq(nfft, d=1.0 / wfs)
    return mag, freqs, times, wfs


def _band_slice(freqs, band):
    lo, hi = band
    sel = (freqs >= lo) & (freqs <= hi)
    if not np.any(sel):
        raise ValueError(f"band {band} contains no frequency bins")
    return sel


def spectrogram(x, fs, params: DeshapeParams = DeshapeParams()) -> TfPlane:
    """Plain short-time magnitude spectrogram restricted to the band."""
    mag, freqs, times, _ = _stft_mag(x, fs, params)
    sel = _band_slice(freqs, params.band)
    return TfPlane(times=times, freqs=freqs[sel], values=mag[:, sel].T)


def deshape_spectrogram(x, fs, params: DeshapeParams = DeshapeParams()) -> TfPlane:
    """Spectrogram times its inverted-quefrency cepstral mask.

    The gamma-compressed cepstrum of each frame peaks at multiples of the
    fundamental period; read at quefrency 1/f it peaks at the fundamental
    and its subharmonics, so the product suppresses harmonic ridges.
    """
    if not 0 < params.gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    mag, freqs, times, wfs = _stft_mag(x, fs, params)
    lo, hi = params.band
    if lo <= 0 or hi >= fs / 2 or lo >= hi:
        raise ValueError(f"band {params.band} must lie inside (0, fs/2)")
    sel = _band_slice(freqs, params.band)

    nfft = 2 * (mag.shape[1] - 1)
    ceps = np.fft.irfft(mag**params.gamma, n=nfft, axis=1)
    ceps = np.maximum(ceps, 0.0)
    quef = np.arange(nfft // 2) / wfs  # seconds
    band_freqs = freqs[sel]
    # mask value at frequency f = cepstrum read at quefrency 1/f
    mask = np.empty((mag.shape[0], band_freqs.size))
    inv_q = 1.0 / band_freqs
    for i in range(mag.shape[0]):
        mask[i] = np.interp(inv_q, quef, ceps[i, : nfft // 2])
    values = mag[:, sel] * mask
    return TfPlane(times=times, freqs=band_freqs, values=values.T)


def extract_ihr(plane: TfPlane, band, smooth_penalty: float = 1.0) -> IhrCurve:
    """Dominant in-band ridge via dynamic programming with an L1 rate penalty.

    The path maximizes the summed per-frame magnitude (normalized to the
    frame maximum) minus smooth_penalty per Hz of frame-to-frame jump, so
    the curve stays continuous instead of hopping between ridges.
    """
    lo, hi = band
    sel = (plane.freqs >= lo) & (plane.freqs <= hi)
    if not np.any(sel):
        raise ValueError(f"band {band} does not intersect the plane frequencies")
    freqs = plane.freqs[sel]
    vals = plane.values[sel, :]
    n_f, n_t = vals.shape
    peak = vals.max(axis=0)
    peak[peak == 0] = 1.0
    score = vals / peak[None, :]

    df = freqs[1] - freqs[0] if n_f > 1 else 1.0
    step = smooth_penalty * df
    D = score[:, 0].copy()
    back = np.zeros((n_f, n_t), dtype=np.int32)
    idx = np.arange(n_f)
    for t in range(1, n_t):
        # best predecessor under L1 penalty: two running-max passes
        best = D.copy()
        src = idx.copy()
        for f in range(1, n_f):
            if best[f - 1] - step > best[f]:
                best[f] = best[f - 1] - step
                src[f] = src[f - 1]
        for f in range(n_f - 2, -1, -1):
            if best[f + 1] - step > best[f]:
                best[f] = best[f + 1] - step
                src[f] = src[f + 1]
        back[:, t] = src
        D = score[:, t] + best
    path = np.empty(n_t, dtype=int)
    path[-1] = int(np.argmax(D))
    for t in range(n_t - 1, 0, -1):
        path[t - 1] = back[path[t], t]
    return IhrCurve(times=plane.times, rate=freqs[path])


def _detection_energy(x, fs):
    """Squared zero-phase band-passed signal used for beat placement."""
    x = np.asarray(x, dtype=float)
    lo = 5.0
    hi = min(45.0, 0.45 * fs)
    if hi <= lo:
        lo, hi = 0.05 * fs, 0.45 * fs
    sos = sps.butter(3, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return sps.sosfiltfilt(sos, x) ** 2


def beat_track(
    x,
    fs,
    ihr: IhrCurve,
    search_ms: float = 150.0,
    min_sep_ms: float = MIN_SEP_MATERNAL_MS,
) -> PeakList:
    """Place one beat per expected cycle using the rate curve as a prior.

    Starting from the strongest energy peak, predicted beat positions are
    stepped by the local period and snapped to the energy maximum within
    +/- search_ms of the prediction.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n / fs * float(np.max(ihr.rate)) < 2:
        raise ValueError("rate curve implies fewer than 2 beats in the record")
    e = _detection_energy(x, fs)
    search = int(round(search_ms * fs / 1000.0))
    floor = 1e-3 * float(np.max(e)) if np.max(e) > 0 else 0.0

    def snap(pred):
        a = max(0, pred - search)
        b = min(n, pred + search + 1)
        if a >= b:
            return None
        k = a + int(np.argmax(e[a:b]))
        if e[k] <= floor:
            return None  # silent region, no beat to land on
        return k

    anchor = int(np.argmax(e))
    peaks = [anchor]
    cur = anchor
    while True:
        period = fs / max(ihr.at(cur / fs), 1e-6)
        pred = cur + int(round(period))
        if pred - search >= n:
            break
        nxt = snap(pred)
        if nxt is None or nxt <= cur:
            break
        peaks.append(nxt)
        cur = nxt
    cur = anchor
    while True:
        period = fs / max(ihr.at(cur / fs), 1e-6)
        pred = cur - int(round(period))
        if pred + search < 0:
            break
        prv = snap(pred)
        if prv is None or prv >= cur:
            break
        peaks.append(prv)
        cur = prv
    peaks = np.array(sorted(set(peaks)), dtype=int)

    min_sep = min_sep_ms * fs / 1000.0
    kept = []
    for p in peaks:
        if kept and (p - kept[-1]) * 1.0 < min_sep:
            # keep the stronger of the colliding pair
            if e[p] > e[kept[-1]]:
                kept[-1] = p
        else:
            kept.append(p)
    return PeakList.from_samples(np.array(kept, dtype=int), fs)


def detect_rpeaks(
    x,
    fs,
    band=MATERNAL_BAND,
    params: DeshapeParams = DeshapeParams(),
    min_sep_ms: float = MIN_SEP_MATERNAL_MS,
) -> PeakList:
    """De-shape spectrogram -> rate curve -> beat tracking, in one call."""
    plane = deshape_spectrogram(x, fs, params)
    ihr = extract_ihr(plane, band)
    return beat_track(x, fs, ihr, min_sep_ms=min_sep_ms)


def energy_detector(x, fs, min_sep_ms: float = MIN_SEP_MATERNAL_MS) -> PeakList:
    """Classical filtered-derivative QRS detector (second opinion for bSQI)."""
    x = np.asarray(x, dtype=float)
    lo = 10.0
    hi = min(30.0, 0.45 * fs)
    if hi <= lo:
        lo, hi = 0.05 * fs, 0.45 * fs
    sos = sps.butter(3, [lo, hi], btype="bandpass", fs=fs, output="sos")
    e = sps.sosfiltfilt(sos, x) ** 2
    width = max(1, int(round(0.08 * fs)))
    integ = np.convolve(e, np.ones(width) / width, mode="same")
    thresh = 0.75 * np.percentile(integ, 99)
    dist = max(1, int(round(min_sep_ms * fs / 1000.0)))
    locs, _ = sps.find_peaks(integ, height=thresh, distance=dist)
    return PeakList.from_samples(np.asarray(locs, dtype=int), fs)


def fuse_peaks(peak_lists, keep: int = 5, window_ms: float = 50.0) -> PeakList:
    """Vote a consensus beat list out of several candidate detections.

    The `keep` lists with the smallest RR-interval standard deviation are
    retained; a consensus beat exists wherever at least ceil(keep/2) of
    them agree within window_ms, at the median of the agreeing times.
    """
    if not peak_lists:
        raise ValueError("need at least one peak list")
    if keep > len(peak_lists):
        import warnings

        warnings.warn(f"keep={keep} exceeds {len(peak_lists)} lists; clamping")
        keep = len(peak_lists)

    def rr_std(pl):
        rr = pl.rr_intervals()
        return float(np.std(rr)) if len(rr) >= 2 else np.inf

    order = sorted(range(len(peak_lists)), key=lambda i: (rr_std(peak_lists[i]), i))
    retained = [peak_lists[i] for i in order[:keep]]
    need = int(np.ceil(keep / 2))

    events = []
    for li, pl in enumerate(retained):
        events.extend((t, li) for t in pl.times)
    if not events:
        return PeakList(np.array([]))
    events.sort()
    times = np.array([t for t, _ in events])
    lists = [li for _, li in events]

    consensus = []
    i = 0
    while i < len(times):
        j = i + 1
        while j < len(times) and times[j] - times[j - 1] <= window_ms:
            j += 1
        votes = len(set(lists[i:j]))
        if votes >= need:
            consensus.append(float(np.median(times[i:j])))
        i = j
    consensus = np.array(consensus)
    if len(consensus) > 1:
        keep_mask = np.concatenate([[True], np.diff(consensus) > 0])
        consensus = consensus[keep_mask]
    return PeakList(consensus)
