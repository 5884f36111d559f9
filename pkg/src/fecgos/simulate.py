"""Semi-real abdominal ECG simulation with ground truth.

A maternal component is obtained by projecting a donor vectorcardiogram
(VCG) onto a direction given by an angle pair; a fetal component comes
from another donor ECG time-compressed by two (resampled to half the
output rate, then read at the output rate), RMS-normalized to the
maternal level and scaled by a ratio r < 1. Gaussian noise is added at a
prescribed SNR. A synthetic donor generator is included so the simulator
is usable without any external database.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .evaluate import detect_pt
from .records import PeakList, Record, resample

PAPER_ANGLE_PAIRS = ((np.pi / 4, np.pi / 4), (np.pi / 5, 3 * np.pi / 10))


@dataclass(frozen=True)
class SimConfig:
    r: float = 0.25  # fetal/maternal amplitude ratio
    snr_db: float | None = 20.0  # None disables noise
    seed: int = 0
    duration_s: float = 57.0
    out_fs: int = 1000
    angles: tuple = PAPER_ANGLE_PAIRS  # one (theta_xy, theta_z) pair per channel

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        if self.out_fs <= 0:
            raise ValueError("out_fs must be positive")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if not self.angles:
            raise ValueError("need at least one angle pair")


@dataclass(frozen=True)
class SimRecord:
    record: Record
    truth: dict  # mecg/fecg clean per-channel signals + PeakLists


def project_vcg(vx, vy, vz, theta_xy: float, theta_z: float):
    """Project a VCG triple onto the direction given by the angle pair:
    (vx cos(t_xy) + vy sin(t_xy)) cos(t_z) + vz sin(t_z), sample-wise."""
    vx, vy, vz = (np.asarray(v, dtype=float) for v in (vx, vy, vz))
    if not len(vx) == len(vy) == len(vz):
        raise ValueError("VCG components must have equal length")
    return (vx * np.cos(theta_xy) + vy * np.sin(theta_xy)) * np.cos(theta_z) + vz * np.sin(
        theta_z
    )


@dataclass(frozen=True)
class MixResult:
    channel: np.ndarray
    clean: np.ndarray
    fecg_scaled: np.ndarray
    noise: np.ndarray


def mix(mecg, fecg, config: SimConfig, rng=None) -> MixResult:
    """Combine one maternal and one fetal trace into a noisy channel.

    The fetal trace is RMS-equalized to the maternal one and multiplied
    by r; noise power is set from the clean sum so that
    10 log10(P_clean / P_noise) equals snr_db.
    """
    mecg = np.asarray(mecg, dtype=float)
    fecg = np.asarray(fecg, dtype=float)
    if len(mecg) != len(fecg):
        raise ValueError("maternal and fetal traces must have equal length")
    m_rms = np.sqrt(np.mean(mecg**2))
    f_rms = np.sqrt(np.mean(fecg**2))
    if f_rms == 0:
        raise ValueError("fetal trace is identically zero")
    fecg_scaled = config.r * (m_rms / f_rms) * fecg
    clean = mecg + fecg_scaled
    if config.snr_db is None:
        noise = np.zeros_like(clean)
    else:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        p_clean = np.mean(clean**2)
        sigma = np.sqrt(p_clean / 10 ** (config.snr_db / 10.0))
        noise = rng.normal(0.0, sigma, size=len(clean))
    return MixResult(channel=clean + noise, clean=clean, fecg_scaled=fecg_scaled, noise=noise)


def _donor_beats(donor: Record) -> PeakList:
    for kind in ("maternal_r", "fetal_r", "r"):
        if kind in donor.annotations:
            return donor.annotations[kind]
    raise ValueError(f"donor {donor.name!r} carries no R-peak annotations")


def _compress_fetal(donor: Record, out_fs: int) -> tuple:
    """Time-compress a fetal donor by two: resample its channels to
    out_fs/2 and reinterpret the samples at out_fs. Annotation times halve."""
    half = resample(donor, out_fs // 2)
    chans = [c for c in half.channels]
    beats = PeakList(_donor_beats(donor).times / 2.0)
    return chans, beats


def generate_record(
    donor_maternal: Record, donor_fetal: Record, config: SimConfig, index: int = 0
) -> SimRecord:
    """Build one simulated multi-channel record from a donor pair."""
    n_ch = len(config.angles)
    n_out = int(round(config.duration_s * config.out_fs))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(index,)))

    mat = resample(donor_maternal, config.out_fs)
    if mat.n_channels < 3:
        raise ValueError("maternal donor must provide a 3-channel VCG")
    if mat.n_samples < n_out:
        raise ValueError(
            f"maternal donor {mat.name!r} too short: {mat.n_samples} < {n_out} samples"
        )
    fet_chans, fet_beats = _compress_fetal(donor_fetal, config.out_fs)
    if len(fet_chans[0]) < n_out:
        raise ValueError(
            f"fetal donor {donor_fetal.name!r} too short after compression: "
            f"{len(fet_chans[0])} < {n_out} samples"
        )

    vx, vy, vz = (c[:n_out] for c in mat.channels[:3])
    dur_ms = n_out * 1000.0 / config.out_fs
    m_beats = _donor_beats(mat)
    maternal_r = PeakList(m_beats.times[m_beats.times < dur_ms])
    fetal_r = PeakList(fet_beats.times[fet_beats.times < dur_ms])

    channels, mecg_clean, fecg_clean = [], [], []
    for c, (t_xy, t_z) in enumerate(config.angles):
        mecg = project_vcg(vx, vy, vz, t_xy, t_z)
        fet = fet_chans[min(c, len(fet_chans) - 1)][:n_out]
        mixed = mix(mecg, fet, config, rng=rng)
        channels.append(mixed.channel)
        mecg_clean.append(mecg)
        fecg_clean.append(mixed.fecg_scaled)

    # landmark truth from the clean fetal trace of the first channel
    pt = detect_pt(fecg_clean[0], config.out_fs, fetal_r) if len(fetal_r) >= 2 else {}
    annotations = {"maternal_r": maternal_r, "fetal_r": fetal_r}
    if pt:
        annotations["fetal_p"] = pt["p"]
        annotations["fetal_t"] = pt["t"]
    name = f"sim{index:03d}"
    rec = Record(channels=channels, fs=config.out_fs, name=name, annotations=annotations)
    truth = {
        "mecg": mecg_clean,
        "fecg": fecg_clean,
        "maternal_r": maternal_r,
        "fetal_r": fetal_r,
        "fetal_p": annotations.get("fetal_p"),
        "fetal_t": annotations.get("fetal_t"),
    }
    return SimRecord(record=rec, truth=truth)


def generate_dataset(donor_maternal, donor_fetal, config: SimConfig, count=None):
    """Simulate one record per donor pair (donors recycled when count is larger).

    Deterministic for a fixed seed; donors too short for the requested
    duration are skipped with a warning.
    """
    if not donor_maternal or not donor_fetal:
        raise ValueError("need at least one maternal and one fetal donor")
    if count is None:
        count = max(len(donor_maternal), len(donor_fetal))
    out = []
    for i in range(count):
        dm = donor_maternal[i % len(donor_maternal)]
        df = donor_fetal[i % len(donor_fetal)]
        try:
            out.append(generate_record(dm, df, config, index=i))
        except ValueError as exc:
            warnings.warn(f"skipping donor pair {dm.name}/{df.name}: {exc}")
    return out


# ---------------------------------------------------------------------------
# synthetic donors


def _gaussian_train(t, centers_s, width_s, amp):
    out = np.zeros_like(t)
    for c in centers_s:
        lo = np.searchsorted(t, c - 5 * width_s)
        hi = np.searchsorted(t, c + 5 * width_s)
        out[lo:hi] += amp * np.exp(-0.5 * ((t[lo:hi] - c) / width_s) ** 2)
    return out


# (offset_ms, width_ms, amplitude) per waveform component
_WAVES = {
    "p": (-160.0, 22.0, 0.15),
    "q": (-28.0, 9.0, -0.08),
    "r": (0.0, 13.0, 1.0),
    "s": (30.0, 11.0, -0.18),
    "t": (230.0, 55.0, 0.32),
}


def _pqrst(t, beats_s, lead_gains, rng):
    sig = np.zeros_like(t)
    amp_mod = 1.0 + 0.05 * rng.standard_normal(len(beats_s))
    for wave, (off, width, amp) in _WAVES.items():
        gain = lead_gains.get(wave, 1.0)
        for b, am in zip(beats_s, amp_mod):
            c = b + off / 1000.0
            w = width / 1000.0
            lo = np.searchsorted(t, c - 5 * w)
            hi = np.searchsorted(t, c + 5 * w)
            sig[lo:hi] += gain * amp * am * np.exp(-0.5 * ((t[lo:hi] - c) / w) ** 2)
    return sig


def _beat_times(duration_s, hr_bpm, rng, hrv=0.03):
    period = 60.0 / hr_bpm
    times = []
    t = 0.35
    while t < duration_s - 0.45:
        times.append(t)
        drift = 1.0 + 0.02 * np.sin(2 * np.pi * t / 12.0)
        t += period * drift * (1.0 + hrv * rng.standard_normal())
    return np.array(times)


def synthetic_vcg_donor(duration_s=120.0, fs=1000, hr_bpm=75.0, seed=0, name="vcg") -> Record:
    """Three-lead PQRST donor with per-lead morphology differences."""
    rng = np.random.default_rng(seed)
    hr = hr_bpm * (1.0 + 0.08 * (rng.random() - 0.5))
    beats = _beat_times(duration_s, hr, rng)
    t = np.arange(int(round(duration_s * fs))) / fs
    leads = [
        {"p": 1.0, "r": 1.0, "t": 1.0},
        {"p": 0.7, "q": 1.5, "r": 0.6, "s": 1.4, "t": 0.8},
        {"p": 0.4, "r": 0.35, "s": 2.0, "t": 1.3},
    ]
    chans = [_pqrst(t, beats, g, np.random.default_rng(seed + 17 * (k + 1))) for k, g in enumerate(leads)]
    ann = {"maternal_r": PeakList(beats * 1000.0)}
    return Record(channels=chans, fs=fs, name=name, annotations=ann)


def synthetic_ecg_donor(
    duration_s=120.0, fs=1000, hr_bpm=80.0, seed=0, name="ecg", n_channels=2
) -> Record:
    """Plain ECG donor (fetal source); channels differ in lead gains."""
    rng = np.random.default_rng(seed)
    hr = hr_bpm * (1.0 + 0.08 * (rng.random() - 0.5))
    beats = _beat_times(duration_s, hr, rng)
    t = np.arange(int(round(duration_s * fs))) / fs
    gain_sets = [
        {"p": 1.0, "r": 1.0, "t": 1.0},
        {"p": 0.8, "r": 0.75, "s": 1.6, "t": 0.9},
        {"p": 0.5, "r": 1.2, "t": 0.7},
    ]
    chans = [
        _pqrst(t, beats, gain_sets[k % len(gain_sets)], np.random.default_rng(seed + 31 * (k + 1)))
        for k in range(n_channels)
    ]
    ann = {"maternal_r": PeakList(beats * 1000.0)}
    return Record(channels=chans, fs=fs, name=name, annotations=ann)
