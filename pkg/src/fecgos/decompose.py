"""Separation of maternal and fetal ECG from 1-3 abdominal channels.

Pipeline: preprocess each channel, sweep a grid of unit-norm channel
combinations, detect and fuse maternal R peaks, estimate the maternal
component per combination by optimal shrinkage of R-aligned cycle
matrices, subtract it, pick the combination whose residual has the best
beat-agreement quality index, detect fetal peaks on that residual,
denoise the fetal cycles the same way, and refine with one more
maternal pass on the fetal-suppressed signal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rpeak
from .preprocess import FilterSpec, preprocess
from .records import PeakList, Record
from .shrinkage import DenoiseConfig, optimal_shrink

MIN_CYCLES_FOR_SHRINKAGE = 8


class DecompositionError(RuntimeError):
    """Raised when a pipeline stage cannot produce a usable result."""


@dataclass(frozen=True)
class CombinationGrid:
    """Unit vectors on the combination sphere S^(J-1)."""

    thetas: list

    def __post_init__(self):
        ths = [np.asarray(t, dtype=float) for t in self.thetas]
        object.__setattr__(self, "thetas", ths)
        if not ths:
            raise ValueError("grid must be non-empty")
        for t in ths:
            if abs(np.linalg.norm(t) - 1.0) > 1e-12:
                raise ValueError(f"theta {t} is not unit-norm")

    def __len__(self):
        return len(self.thetas)

    @staticmethod
    def default(n_channels: int, steps: int = 14) -> "CombinationGrid":
        """Standard sweep: {+1,-1} for one channel; for two channels theta_1
        runs over steps equispaced values in (-1, 1] with theta_2 >= 0."""
        if n_channels == 1:
            return CombinationGrid([np.array([1.0]), np.array([-1.0])])
        if n_channels == 2:
            if steps < 2 or steps % 2:
                raise ValueError("two-channel grid needs an even number of steps >= 2")
            half = steps // 2
            t1 = np.arange(-(half - 1), half + 1) / half
            return CombinationGrid(
                [np.array([a, np.sqrt(max(0.0, 1.0 - a * a))]) for a in t1]
            )
        if n_channels == 3:
            # hemisphere product grid, roughly `steps` directions
            n_phi = max(4, int(round(np.sqrt(2 * steps))))
            n_psi = max(2, steps // n_phi)
            ths = []
            for psi in np.linspace(-np.pi / 3, np.pi / 3, n_psi):
                for phi in np.linspace(-np.pi / 2, np.pi / 2, n_phi, endpoint=False):
                    ths.append(
                        np.array(
                            [np.cos(phi) * np.cos(psi), np.sin(phi) * np.cos(psi), np.sin(psi)]
                        )
                    )
            return CombinationGrid(ths)
        raise ValueError("only 1-3 channels are supported")


@dataclass(frozen=True)
class SegmentMatrix:
    """R-aligned cardiac cycles, one per column."""

    data: np.ndarray  # (p, n)
    peak_index_in_segment: int
    source_peaks: PeakList
    w: int  # cycle window length, samples

    @property
    def n_cycles(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DecompositionOutput:
    theta_star: np.ndarray
    mecg: np.ndarray
    rfecg: np.ndarray
    fecg: np.ndarray
    fetal_peaks: PeakList
    maternal_peaks: PeakList
    sqi_table: list  # (theta, score) pairs


@dataclass(frozen=True)
class DecomposeConfig:
    filters: FilterSpec = field(default_factory=FilterSpec)
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    grid_steps: int = 14
    iterations: int = 1
    fuse_keep: int = 5
    nonlocal_median_k: int | None = None
    maternal_band: tuple = rpeak.MATERNAL_BAND
    fetal_band: tuple = rpeak.FETAL_BAND
    min_maternal_peaks: int = 10


def linear_combinations(channels, grid: CombinationGrid):
    """One combined signal per grid direction: z_theta = sum_j theta_j x_j."""
    X = np.vstack([np.asarray(c, dtype=float) for c in channels])
    J = X.shape[0]
    out = []
    for th in grid.thetas:
        if th.shape != (J,):
            raise ValueError(f"theta dimension {th.shape[0]} != channel count {J}")
        out.append(th @ X)
    return out


def segment(z, peaks: PeakList, fs: float) -> SegmentMatrix:
    """Cut one cycle per R peak, spanning ceil(3w/8) before to ceil(5w/8) after.

    The window w is the rounded 95% quantile (linear interpolation) of
    this signal's RR intervals, in samples. Peaks whose full window does
    not fit in the record are dropped.
    """
    z = np.asarray(z, dtype=float)
    if len(peaks) < 3:
        raise DecompositionError("need at least 3 peaks to segment")
    idx = peaks.to_samples(fs)
    rr = np.diff(idx)
    w = int(round(float(np.quantile(rr, 0.95))))
    left = int(np.ceil(3 * w / 8))
    right = int(np.ceil(5 * w / 8))
    usable = [(i, k) for i, k in enumerate(idx) if k - left >= 0 and k + right < len(z)]
    if len(usable) < 3:
        raise DecompositionError("fewer than 3 peaks have a full cycle window in the record")
    cols = np.stack([z[k - left : k + right + 1] for _, k in usable], axis=1)
    kept_times = peaks.times[[i for i, _ in usable]]
    return SegmentMatrix(
        data=cols, peak_index_in_segment=left, source_peaks=PeakList(kept_times), w=w
    )


def stitch(seg: SegmentMatrix, n_samples: int, fs: float) -> np.ndarray:
    """Reassemble a continuous signal from per-cycle columns.

    Samples outside every window are zero; where consecutive windows
    overlap, the two columns are cross-faded with linear ramps.
    """
    out = np.zeros(n_samples)
    idx = seg.source_peaks.to_samples(fs)
    left = seg.peak_index_in_segment
    prev_end = -1
    for i, k in enumerate(idx):
        a = k - left
        b = a + seg.data.shape[0]  # exclusive
        col = seg.data[:, i]
        if a > prev_end:
            out[a:b] = col
        else:
            ov = prev_end - a + 1  # overlap length
            ramp = np.arange(1, ov + 1) / (ov + 1)
            out[a : a + ov] = out[a : a + ov] * (1 - ramp) + col[:ov] * ramp
            out[a + ov : b] = col[ov:]
        prev_end = b - 1
    return out


def estimate_component(
    z, peaks: PeakList, fs: float, config: DenoiseConfig = DenoiseConfig()
):
    """Estimate the cardiac component locked to `peaks` in z.

    Cycles are denoised jointly by optimal shrinkage (falling back to an
    entry-wise median template when too few cycles are available) and
    stitched back into a full-length signal.
    """
    z = np.asarray(z, dtype=float)
    raw = segment(z, peaks, fs)
    if raw.n_cycles >= MIN_CYCLES_FOR_SHRINKAGE:
        denoised = optimal_shrink(raw.data, config).denoised
    else:
        warnings.warn(
            f"only {raw.n_cycles} cycles; using the median template instead of shrinkage"
        )
        template = np.median(raw.data, axis=1)
        denoised = np.tile(template[:, None], (1, raw.n_cycles))
    seg_dn = SegmentMatrix(
        data=denoised,
        peak_index_in_segment=raw.peak_index_in_segment,
        source_peaks=raw.source_peaks,
        w=raw.w,
    )
    return stitch(seg_dn, len(z), fs), seg_dn


def beat_agreement(a: PeakList, b: PeakList, window_ms: float = 50.0) -> float:
    """F1-style agreement of two beat lists: 2 * matched / (|a| + |b|)."""
    from .evaluate import match_peaks

    if len(a) < 2 or len(b) < 2:
        return 0.0
    m = match_peaks(a, b, window_ms=window_ms)
    return 2.0 * len(m.pairs) / (len(a) + len(b))


def bsqi(z, fs: float, band=(0.8, 3.5), min_sep_ms: float = 200.0) -> float:
    """Beat-agreement quality index of a signal in [0, 1].

    Two algorithmically independent QRS detectors are run; the score is
    their beat agreement with 50 ms matching. If either detector finds
    fewer than 2 beats the score is 0.
    """
    z = np.asarray(z, dtype=float)
    if len(z) < 5 * fs:
        raise ValueError("bsqi needs at least 5 s of signal")
    try:
        a = rpeak.detect_rpeaks(z, fs, band=band, min_sep_ms=min_sep_ms)
        b = rpeak.energy_detector(z, fs, min_sep_ms=min_sep_ms)
    except ValueError:
        return 0.0
    return beat_agreement(a, b)


def select_best(rfecgs, fs: float):
    """Pick the combination whose residual scores highest; ties go to the
    earlier grid index. Returns (theta_star, index, scores)."""
    if not rfecgs:
        raise ValueError("no candidates")
    scores = []
    for th, sig in rfecgs:
        try:
            scores.append(bsqi(sig, fs))
        except ValueError:
            scores.append(0.0)
    best = int(np.argmax(scores))
    return rfecgs[best][0], best, scores


def nonlocal_median(seg: SegmentMatrix, k_m: int) -> SegmentMatrix:
    """Replace each cycle by the entry-wise median of itself and the k_m
    cycles with the closest RR interval (temporal proximity breaks ties)."""
    n = seg.n_cycles
    if not 2 <= k_m < n:
        raise ValueError(f"k_m must satisfy 2 <= k_m < n cycles ({n})")
    times = seg.source_peaks.times
    rr = np.empty(n)
    rr[:-1] = np.diff(times)
    rr[-1] = rr[-2]
    out = np.empty_like(seg.data)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        others.sort(key=lambda j: (abs(rr[j] - rr[i]), abs(times[j] - times[i])))
        group = [i] + others[:k_m]
        out[:, i] = np.median(seg.data[:, group], axis=1)
    return SegmentMatrix(
        data=out,
        peak_index_in_segment=seg.peak_index_in_segment,
        source_peaks=seg.source_peaks,
        w=seg.w,
    )


def _detect_fetal(z, fs, band):
    return rpeak.detect_rpeaks(z, fs, band=band, min_sep_ms=rpeak.MIN_SEP_FETAL_MS)


def decompose(record: Record, config: DecomposeConfig = DecomposeConfig()) -> DecompositionOutput:
    """Run the full separation on a preloaded record."""
    fs = record.fs
    if record.duration_s < 30:
        raise DecompositionError("record shorter than 30 s; too few cycles for shrinkage")

    clean = [preprocess(c, fs, config.filters) for c in record.channels]
    grid = CombinationGrid.default(record.n_channels, config.grid_steps)
    zs = linear_combinations(clean, grid)

    # maternal peaks per combination, then vote
    per_theta = []
    for z in zs:
        try:
            per_theta.append(rpeak.detect_rpeaks(z, fs, band=config.maternal_band))
        except ValueError:
            per_theta.append(PeakList(np.array([])))
    maternal = rpeak.fuse_peaks(per_theta, keep=config.fuse_keep)
    if len(maternal) < config.min_maternal_peaks:
        raise DecompositionError(
            f"maternal detection failed: {len(maternal)} fused peaks "
            f"(< {config.min_maternal_peaks}) at the R-peak fusion stage"
        )

    # per-combination maternal estimate and residual quality
    candidates = []
    scores = []
    for th, z in zip(grid.thetas, zs):
        try:
            mecg, _ = estimate_component(z, maternal, fs, config.denoise)
            rf = z - mecg
            score = bsqi(rf, fs, band=config.fetal_band)
        except (DecompositionError, ValueError):
            mecg, rf, score = np.zeros_like(z), z, -1.0
        candidates.append((th, z, mecg, rf))
        scores.append(score)
    if max(scores) < 0:
        raise DecompositionError("maternal estimation failed for every combination")
    best = int(np.argmax(scores))
    theta_star, z_star, mecg, rfecg = candidates[best]

    fetal = _detect_fetal(rfecg, fs, config.fetal_band)
    fecg, fsegs = estimate_component(rfecg, fetal, fs, config.denoise)

    # refinement: suppress the fetal estimate, redo the maternal pass
    for _ in range(config.iterations):
        z_rm = z_star - fecg
        mecg, _ = estimate_component(z_rm, maternal, fs, config.denoise)
        rfecg = z_star - mecg
        fetal = _detect_fetal(rfecg, fs, config.fetal_band)
        fecg, fsegs = estimate_component(rfecg, fetal, fs, config.denoise)

    if config.nonlocal_median_k is not None and fsegs.n_cycles > config.nonlocal_median_k:
        fsegs = nonlocal_median(fsegs, config.nonlocal_median_k)
        fecg = stitch(fsegs, len(rfecg), fs)

    return DecompositionOutput(
        theta_star=theta_star,
        mecg=mecg,
        rfecg=rfecg,
        fecg=fecg,
        fetal_peaks=fetal,
        maternal_peaks=maternal,
        sqi_table=[(th, s) for th, s in zip(grid.thetas, scores)],
    )
