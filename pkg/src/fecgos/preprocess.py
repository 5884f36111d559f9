"""Per-channel cleanup: low-pass, powerline notch, two-stage median detrend.

Everything is zero-phase (forward-backward filtering) so that R-peak
positions are not displaced by group delay. The detrend stage estimates
the baseline with two cascaded moving-median filters and subtracts it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.ndimage import median_filter


@dataclass(frozen=True)
class FilterSpec:
    lowpass_order: int = 5
    lowpass_cutoff: float = 100.0  # Hz
    notch_center: float = 60.0  # Hz
    notch_q: float = 30.0
    median_short: float = 200.0  # ms
    median_long: float = 600.0  # ms

    def __post_init__(self):
        if self.lowpass_order < 1:
            raise ValueError("lowpass_order must be >= 1")
        if self.lowpass_cutoff <= 0 or self.notch_center <= 0:
            raise ValueError("cutoff frequencies must be positive")
        if not self.median_short < self.median_long:
            raise ValueError("median_short must be < median_long")


def _odd_window(ms: float, fs: float) -> int:
    w = int(round(ms * fs / 1000.0))
    return w + 1 if w % 2 == 0 else w


def butterworth_lowpass(x, fs: float, spec: FilterSpec = FilterSpec()):
    """Zero-phase Butterworth low-pass (applied forward and backward)."""
    x = np.asarray(x, dtype=float)
    if spec.lowpass_cutoff >= fs / 2:
        raise ValueError(f"lowpass cutoff {spec.lowpass_cutoff} Hz >= Nyquist {fs / 2} Hz")
    if len(x) <= 3 * spec.lowpass_order:
        raise ValueError("signal too short for the filter order")
    sos = sps.butter(spec.lowpass_order, spec.lowpass_cutoff, fs=fs, output="sos")
    return sps.sosfiltfilt(sos, x)


def notch_filter(x, fs: float, spec: FilterSpec = FilterSpec()):
    """Zero-phase IIR notch at the powerline frequency."""
    x = np.asarray(x, dtype=float)
    if spec.notch_center >= fs / 2:
        raise ValueError(f"notch center {spec.notch_center} Hz >= Nyquist {fs / 2} Hz")
    if len(x) <= 12:
        raise ValueError("signal too short for the notch filter")
    b, a = sps.iirnotch(spec.notch_center, spec.notch_q, fs=fs)
    return sps.filtfilt(b, a, x)


def median_baseline(x, fs: float, spec: FilterSpec = FilterSpec()):
    """Baseline estimate: short moving median followed by a long one."""
    x = np.asarray(x, dtype=float)
    ws = _odd_window(spec.median_short, fs)
    wl = _odd_window(spec.median_long, fs)
    if len(x) <= wl:
        raise ValueError(f"record shorter than the long median window ({wl} samples)")
    return median_filter(median_filter(x, size=ws, mode="reflect"), size=wl, mode="reflect")


def median_detrend(x, fs: float, spec: FilterSpec = FilterSpec()):
    """Remove baseline wander: x minus its two-stage moving-median baseline."""
    x = np.asarray(x, dtype=float)
    return x - median_baseline(x, fs, spec)


def preprocess(x, fs: float, spec: FilterSpec = FilterSpec()):
    """Full cleanup chain: low-pass, then notch, then median detrend."""
    return median_detrend(notch_filter(butterworth_lowpass(x, fs, spec), fs, spec), fs, spec)
