"""Multi-channel ECG records: loading, saving, annotations, resampling.

Supported on-disk formats:
  - CSV: first line ``fs=<int>``, second line comma-separated channel
    names, then one row per sample at full precision.
  - Annotation sidecar ``<name>.ann.json``: JSON object mapping an
    annotation kind (``maternal_r``, ``fetal_r``, ``fetal_p``, ``fetal_t``)
    to an array of millisecond timestamps.
  - WFDB subset: plain-text ``.hea`` plus a format-16 single-segment
    ``.dat`` (enough for CinC2013 / nifeadb style records).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

ANNOTATION_KINDS = ("maternal_r", "fetal_r", "fetal_p", "fetal_t")


class RecordFormatError(ValueError):
    """Raised when an on-disk record or annotation file is malformed."""


@dataclass(frozen=True)
class PeakList:
    """Strictly increasing beat timestamps in milliseconds from record start."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1:
            raise ValueError("peak times must be a 1-D array")
        if t.size and t[0] < 0:
            raise ValueError("peak times must be non-negative")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("peak times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def to_samples(self, fs: float) -> np.ndarray:
        """Timestamps as integer sample indices at rate ``fs``."""
        return np.round(self.times * fs / 1000.0).astype(int)

    @staticmethod
    def from_samples(idx, fs: float) -> "PeakList":
        return PeakList(np.asarray(idx, dtype=float) * 1000.0 / fs)

    def rr_intervals(self) -> np.ndarray:
        """Successive inter-beat intervals in ms."""
        return np.diff(self.times)


@dataclass(frozen=True)
class Record:
    """Uniformly sampled multi-channel ECG with optional truth annotations."""

    channels: list
    fs: int
    name: str = "record"
    annotations: dict = field(default_factory=dict)

    def __post_init__(self):
        chans = [np.asarray(c, dtype=float) for c in self.channels]
        object.__setattr__(self, "channels", chans)
        if not chans:
            raise ValueError("record needs at least one channel")
        n = len(chans[0])
        if any(len(c) != n for c in chans):
            raise ValueError("all channels must have equal length")
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        for c in chans:
            if not np.all(np.isfinite(c)):
                raise ValueError("channels contain NaN/Inf")
        dur_ms = n * 1000.0 / self.fs
        for kind, pl in self.annotations.items():
            if len(pl) and pl.times[-1] > dur_ms:
                raise ValueError(
                    f"annotation {kind!r} extends past record end "
                    f"({pl.times[-1]:.1f} > {dur_ms:.1f} ms)"
                )

    @property
    def n_samples(self) -> int:
        return len(self.channels[0])

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs


def _ann_path(path: str) -> str:
    base = path[:-4] if path.lower().endswith((".csv", ".hea", ".dat")) else path
    return base + ".ann.json"


def load_annotations(path: str) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise RecordFormatError(f"{path}: annotation file must be a JSON object")
    out = {}
    for kind, times in raw.items():
        try:
            out[kind] = PeakList(np.asarray(times, dtype=float))
        except ValueError as exc:
            raise RecordFormatError(f"{path}: annotation {kind!r}: {exc}") from exc
    return out


def save_annotations(path: str, annotations: dict):
    payload = {k: [float(t) for t in v.times] for k, v in annotations.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def _load_csv(path: str) -> Record:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("fs="):
            raise RecordFormatError(f"{path}:1: expected 'fs=<int>' header, got {header!r}")
        try:
            fs = int(header[3:])
        except ValueError:
            raise RecordFormatError(f"{path}:1: bad sampling rate {header[3:]!r}") from None
        names_line = fh.readline().strip()
        if not names_line:
            raise RecordFormatError(f"{path}:2: missing channel-name line")
        names = [s.strip() for s in names_line.split(",")]
        ncols = len(names)
        rows = []
        for lineno, line in enumerate(fh, start=3):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != ncols:
                raise RecordFormatError(
                    f"{path}:{lineno}: ragged row ({len(parts)} values, expected {ncols})"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise RecordFormatError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise RecordFormatError(f"{path}: no sample rows")
    data = np.asarray(rows, dtype=float)
    name = os.path.splitext(os.path.basename(path))[0]
    return Record(channels=[data[:, j] for j in range(ncols)], fs=fs, name=name)


def _load_wfdb(path: str) -> Record:
    """Read a format-16 single-segment WFDB record given its .hea path."""
    hea = path if path.endswith(".hea") else path + ".hea"
    with open(hea) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise RecordFormatError(f"{hea}: empty header")
    head = lines[0].split()
    if len(head) < 3:
        raise RecordFormatError(f"{hea}:1: malformed record line")
    rec_name = head[0]
    if "/" in rec_name:
        raise RecordFormatError(f"{hea}: multi-segment records are unsupported")
    nsig = int(head[1])
    fs = int(round(float(head[2].split("/")[0])))
    nsamp = int(head[3]) if len(head) > 3 else None
    gains, baselines, fname = [], [], None
    for ln in lines[1 : 1 + nsig]:
        parts = ln.split()
        if fname is None:
            fname = parts[0]
        elif parts[0] != fname:
            raise RecordFormatError(f"{hea}: multiple .dat files are unsupported")
        if parts[1].split("+")[0] not in ("16", "16x1"):
            raise RecordFormatError(f"{hea}: only format-16 signals are supported, got {parts[1]}")
        gain_spec = parts[2] if len(parts) > 2 else "200"
        gain_field = gain_spec.split("/")[0]
        if "(" in gain_field:
            gain, base = gain_field.rstrip(")").split("(")
        else:
            gain, base = gain_field, "0"
        g = float(gain)
        gains.append(g if g != 0 else 200.0)
        baselines.append(float(base))
    dat = os.path.join(os.path.dirname(hea), fname)
    raw = np.fromfile(dat, dtype="<i2")
    if raw.size % nsig:
        raise RecordFormatError(f"{dat}: sample count not a multiple of signal count")
    raw = raw.reshape(-1, nsig)
    if nsamp is not None:
        raw = raw[:nsamp]
    chans = [(raw[:, j] - baselines[j]) / gains[j] for j in range(nsig)]
    return Record(channels=chans, fs=fs, name=rec_name)


def load_record(path: str, format: str | None = None) -> Record:
    """Load a record from CSV or a WFDB-subset header, with sidecar annotations."""
    if format is None:
        format = "wfdb-subset" if path.endswith((".hea", ".dat")) else "csv"
    if format == "csv":
        rec = _load_csv(path)
    elif format == "wfdb-subset":
        rec = _load_wfdb(path)
    else:
        raise ValueError(f"unknown record format {format!r}")
    ann_file = _ann_path(path)
    if os.path.exists(ann_file):
        rec = Record(rec.channels, rec.fs, rec.name, load_annotations(ann_file))
    return rec


def save_record(path: str, record: Record, channel_names: list | None = None):
    """Write a record as CSV at full precision, plus annotation sidecar if any."""
    if channel_names is None:
        channel_names = [f"ch{j + 1}" for j in range(record.n_channels)]
    data = np.column_stack(record.channels)
    with open(path, "w") as fh:
        fh.write(f"fs={record.fs}\n")
        fh.write(",".join(channel_names) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    if record.annotations:
        save_annotations(_ann_path(path), record.annotations)


def resample(record: Record, target_fs: int) -> Record:
    """Resample every channel to ``target_fs`` with polyphase windowed-sinc.

    Annotations are in ms and carried over unchanged. Duration is preserved
    to within one output sample.
    """
    if target_fs <= 0:
        raise ValueError("target_fs must be positive")
    if target_fs == record.fs:
        return record
    from math import gcd

    g = gcd(int(target_fs), int(record.fs))
    up, down = int(target_fs) // g, int(record.fs) // g
    chans = [sps.resample_poly(c, up, down, padtype="line") for c in record.channels]
    return Record(chans, int(target_fs), record.name, dict(record.annotations))
