"""Recordings on disk, analysis windows and synthetic test recordings."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._validation import EmptyInputError, ParameterError, check_positive, samples_per

REQUIRED_COLUMNS = ("ppg", "acc_x", "acc_y", "acc_z")
OPTIONAL_COLUMNS = ("ecg",)


class RecordingFormatError(ValueError):
    """A recording CSV could not be parsed.

    ``line`` is the 1-based line number in the file (the header is line 1).
    """

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


@dataclass(frozen=True, eq=False)
class Recording:
    """Synchronised PPG / 3-axis acceleration / optional ECG streams."""

    ppg: np.ndarray
    acc_x: np.ndarray
    acc_y: np.ndarray
    acc_z: np.ndarray
    fs: float = 125.0
    ecg: np.ndarray | None = None
    subject_id: str = ""

    def __post_init__(self):
        check_positive(self.fs, "fs")
        names = list(REQUIRED_COLUMNS) + (["ecg"] if self.ecg is not None else [])
        lengths = set()
        for name in names:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"channel {name} must be 1-D")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            lengths.add(arr.size)
        if len(lengths) != 1:
            raise ValueError(f"channels have unequal lengths {sorted(lengths)}")

    def __len__(self):
        return self.ppg.size

    @property
    def has_ecg(self):
        return self.ecg is not None

    @property
    def duration(self):
        return len(self) / self.fs

    @property
    def acc(self):
        """Acceleration as a ``(3, n_samples)`` array."""
        return np.vstack([self.acc_x, self.acc_y, self.acc_z])

    def as_array(self):
        """Columns ``ppg, acc_x, acc_y, acc_z[, ecg]`` stacked as ``(n_samples, 4|5)``."""
        cols = [self.ppg, self.acc_x, self.acc_y, self.acc_z]
        if self.ecg is not None:
            cols.append(self.ecg)
        return np.column_stack(cols)

    @classmethod
    def from_array(cls, X, fs=125.0, subject_id=""):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] not in (4, 5):
            raise ValueError(
                f"expected an (n_samples, 4|5) array of ppg, acc_x, acc_y, acc_z[, ecg]; got {X.shape}"
            )
        ecg = X[:, 4] if X.shape[1] == 5 else None
        return cls(X[:, 0], X[:, 1], X[:, 2], X[:, 3], fs=fs, ecg=ecg, subject_id=subject_id)

    def equals(self, other):
        """Bit-wise equality of every channel and of the metadata."""
        if not isinstance(other, Recording) or self.fs != other.fs:
            return False
        if self.subject_id != other.subject_id or self.has_ecg != other.has_ecg:
            return False
        return bool(np.array_equal(self.as_array(), other.as_array()))


@dataclass(frozen=True, eq=False)
class Window:
    """One analysis frame of every channel."""

    index: int
    start_sample: int
    fs: float
    ppg: np.ndarray
    acc: np.ndarray  # (3, M)
    ecg: np.ndarray | None = None

    @property
    def t_start(self):
        return self.start_sample / self.fs

    def __len__(self):
        return self.ppg.size


def load_recording(path, fs=125.0, subject_id=None):
    """Read a recording CSV with header ``ppg,acc_x,acc_y,acc_z[,ecg]``.

    Raises
    ------
    RecordingFormatError
        On a bad header, a ragged or malformed row, or a non-numeric cell. The
        message names the offending line.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise RecordingFormatError("empty file", line=1, path=path) from None
        expected = list(REQUIRED_COLUMNS)
        if header not in (expected, expected + list(OPTIONAL_COLUMNS)):
            raise RecordingFormatError(
                f"header must be {','.join(expected)}[,ecg], got {','.join(header)}",
                line=1,
                path=path,
            )
        width = len(header)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise RecordingFormatError(
                    f"expected {width} columns, found {len(row)}", line=line, path=path
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise RecordingFormatError(
                    f"non-numeric cell {bad!r}", line=line, path=path
                ) from None
    data = np.array(rows, dtype=np.float64).reshape(-1, width)
    return Recording.from_array(
        data, fs=fs, subject_id=path.stem if subject_id is None else subject_id
    )


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_recording(rec, path):
    """Write `rec` in the CSV layout read by :func:`load_recording`."""
    header = list(REQUIRED_COLUMNS) + (["ecg"] if rec.has_ecg else [])
    X = rec.as_array()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in X:
            writer.writerow([repr(float(v)) for v in row])


def n_windows(n_samples, fs, T=8.0, S=2.0):
    win = samples_per(T, fs, "T")
    hop = samples_per(S, fs, "S")
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def windows(rec, T=8.0, S=2.0):
    """Slice `rec` into full windows of `T` seconds advancing by `S` seconds.

    The trailing partial window is dropped.
    """
    check_positive(T, "T")
    check_positive(S, "S")
    if S > T / 2:
        warnings.warn(f"step S={S}s exceeds half the window length T={T}s", stacklevel=2)
    win = samples_per(T, rec.fs, "T")
    hop = samples_per(S, rec.fs, "S")
    count = n_windows(len(rec), rec.fs, T, S)
    if count == 0:
        raise EmptyInputError(
            f"recording has {len(rec)} samples, fewer than one {T}s window ({win} samples)"
        )
    acc = rec.acc
    out = []
    for i in range(count):
        a = i * hop
        b = a + win
        out.append(
            Window(
                index=i,
                start_sample=a,
                fs=rec.fs,
                ppg=rec.ppg[a:b],
                acc=acc[:, a:b],
                ecg=None if rec.ecg is None else rec.ecg[a:b],
            )
        )
    return out


# -- synthetic recordings ----------------------------------------------------


@dataclass(frozen=True)
class ArtifactTone:
    """A motion-artifact sinusoid present in both the PPG and the accelerometer.

    ``frequency`` is either a constant in Hz or a sequence of ``(time_s, hz)``
    knots interpolated linearly (held constant outside the knots).
    """

    frequency: float | Sequence[tuple[float, float]]
    amplitude: float = 1.0

    def frequency_at(self, t):
        if np.isscalar(self.frequency):
            return np.full_like(t, float(self.frequency))
        knots = np.asarray(self.frequency, dtype=np.float64)
        return np.interp(t, knots[:, 0], knots[:, 1])


@dataclass(frozen=True)
class SynthSpec:
    duration: float
    hr_trace: Sequence[tuple[float, float]]  # (time_s, bpm) knots
    tones: Sequence[ArtifactTone] = ()
    noise_std: float = 0.0
    seed: int = 0
    fs: float = 125.0
    pulse_width: float = 0.6  # fraction of the beat period occupied by the pulse
    acc_gains: tuple[float, float, float] = (1.0, 0.7, 0.4)

    def __post_init__(self):
        check_positive(self.duration, "duration")
        check_positive(self.fs, "fs")
        knots = np.asarray(self.hr_trace, dtype=np.float64)
        if knots.ndim != 2 or knots.shape[1] != 2 or knots.shape[0] < 1:
            raise ParameterError("hr_trace must be a non-empty sequence of (time_s, bpm) pairs")
        if np.any(np.diff(knots[:, 0]) < 0):
            raise ParameterError("hr_trace times must be non-decreasing")
        if np.any(knots[:, 1] < 40) or np.any(knots[:, 1] > 220):
            raise ParameterError("hr_trace values must lie in [40, 220] BPM")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be >= 0")
        if not 0 < self.pulse_width <= 1:
            raise ParameterError("pulse_width must lie in (0, 1]")

    def hr_at(self, t):
        knots = np.asarray(self.hr_trace, dtype=np.float64)
        return np.interp(t, knots[:, 0], knots[:, 1])


def _cycles(rate_hz, fs):
    """Cumulative cycle count at every sample (starts at 0)."""
    return np.concatenate([[0.0], np.cumsum(rate_hz[:-1]) / fs])


def beat_times(spec):
    """Times (s) at which the synthetic cardiac phase crosses an integer."""
    fs = spec.fs
    n = int(round(spec.duration * fs))
    t = np.arange(n) / fs
    cycles = _cycles(spec.hr_at(t) / 60.0, fs)
    k = np.arange(0, math.floor(cycles[-1]) + 1)
    return np.interp(k, cycles, t)


def generate_synthetic(spec):
    """Build a deterministic recording with known heart rate.

    The PPG is a raised-cosine pulse train whose rate follows ``spec.hr_trace``
    plus every artifact tone plus white noise. The accelerometer axes carry the
    artifact tones only (scaled per axis by ``spec.acc_gains``); the ECG is a
    train of narrow Gaussian R-peaks at the beat instants.
    """
    fs = spec.fs
    n = int(round(spec.duration * fs))
    t = np.arange(n) / fs
    cycles = _cycles(spec.hr_at(t) / 60.0, fs)
    frac = cycles - np.floor(cycles)
    w = spec.pulse_width
    pulse = np.where(frac < w, 0.5 * (1.0 - np.cos(2 * np.pi * frac / w)), 0.0)

    artifact = np.zeros(n)
    for tone in spec.tones:
        phase = 2 * np.pi * _cycles(tone.frequency_at(t), fs)
        artifact += tone.amplitude * np.sin(phase)

    rng = np.random.default_rng(spec.seed)
    noise = spec.noise_std * rng.standard_normal(n) if spec.noise_std > 0 else np.zeros(n)
    ppg = pulse + artifact + noise

    ecg = np.zeros(n)
    width = 0.01
    for tb in beat_times(spec):
        lo = max(0, int(np.floor((tb - 5 * width) * fs)))
        hi = min(n, int(np.ceil((tb + 5 * width) * fs)) + 1)
        seg = t[lo:hi]
        ecg[lo:hi] += np.exp(-0.5 * ((seg - tb) / width) ** 2)

    gx, gy, gz = spec.acc_gains
    return Recording(
        ppg=ppg,
        acc_x=gx * artifact,
        acc_y=gy * artifact,
        acc_z=gz * artifact,
        fs=fs,
        ecg=ecg,
        subject_id=f"synthetic-{spec.seed}",
    )
