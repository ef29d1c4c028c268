"""ECG-derived ground truth and agreement statistics for HR traces."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import LengthError, ParameterError
from .preprocess import FilterSpec, bandpass


class GroundTruthUnavailable(ValueError):
    """Fewer than two R-peaks were found in the window."""


class UndefinedCorrelationError(ValueError):
    """Correlation requested for a constant series."""


@dataclass(frozen=True)
class HrEstimate:
    window_index: int
    bpm_est: float
    bpm_true: float | None = None
    case: int = 0  # 0 marks the initialisation window
    rule1_fired: bool = False
    rule2_fired: bool = False
    bin: int | None = None
    t_start: float = 0.0
    ssa_flagged: bool = False

    @property
    def abs_err(self):
        return None if self.bpm_true is None else abs(self.bpm_est - self.bpm_true)


# -- R-peak detection ----------------------------------------------------------


def _rolling_max(x, width):
    half = width // 2
    padded = np.pad(x, (half, width - 1 - half), mode="edge")
    return np.lib.stride_tricks.sliding_window_view(padded, width).max(axis=1)


def detect_r_peaks(ecg, fs, refractory=0.25, span=2.0, ratio=0.5):
    """Sample indices of R-peaks.

    Band-pass 5-15 Hz, square the first difference, keep local maxima above
    `ratio` times the rolling maximum over `span` seconds, enforce a
    `refractory` gap (largest wins), then snap each detection to the nearest
    extremum of the filtered ECG.
    """
    ecg = np.asarray(ecg, dtype=np.float64)
    taps = int(0.5 * fs) | 1
    if ecg.size <= taps:
        raise LengthError(f"ECG segment of {ecg.size} samples is too short for R-peak detection")
    filt = bandpass(ecg, FilterSpec(5.0, 15.0, taps, fs))
    energy = np.diff(filt, prepend=filt[0]) ** 2
    if not np.any(energy > 0):
        return np.array([], dtype=int)
    thresh = ratio * _rolling_max(energy, max(1, int(round(span * fs))))
    cand = np.flatnonzero(
        (energy[1:-1] > energy[:-2]) & (energy[1:-1] >= energy[2:]) & (energy[1:-1] >= thresh[1:-1])
    ) + 1
    gap = int(round(refractory * fs))
    chosen = []
    for k in cand[np.argsort(-energy[cand], kind="stable")]:
        if all(abs(k - c) > gap for c in chosen):
            chosen.append(k)
    chosen.sort()
    reach = max(1, int(round(0.05 * fs)))
    peaks = []
    for k in chosen:
        lo, hi = max(0, k - reach), min(ecg.size, k + reach + 1)
        peaks.append(lo + int(np.argmax(np.abs(filt[lo:hi]))))
    return np.unique(np.array(peaks, dtype=int))


def ecg_ground_truth(ecg, fs):
    """Heart rate as ``60 * cycles / duration`` between the first and last R-peak."""
    peaks = detect_r_peaks(ecg, fs)
    if peaks.size < 2:
        raise GroundTruthUnavailable(f"found {peaks.size} R-peak(s); need at least 2")
    return bpm_from_peaks(peaks, fs)


def bpm_from_peaks(peaks, fs):
    peaks = np.asarray(peaks, dtype=np.float64)
    if peaks.size < 2:
        raise GroundTruthUnavailable(f"found {peaks.size} R-peak(s); need at least 2")
    return 60.0 * (peaks.size - 1) / ((peaks[-1] - peaks[0]) / fs)


def window_truths(ecg, fs, starts, length):
    """Per-window ground truth from R-peaks detected once over the whole ECG.

    Detecting on the full record avoids filter edge effects at window borders.
    Windows with fewer than two peaks get ``None``.
    """
    peaks = detect_r_peaks(ecg, fs)
    out = []
    for a in starts:
        inside = peaks[(peaks >= a) & (peaks < a + length)]
        out.append(bpm_from_peaks(inside, fs) if inside.size >= 2 else None)
    return out


# -- agreement statistics ------------------------------------------------------


def _pair(est, true, min_length=1):
    est = np.asarray(est, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if est.shape != true.shape or est.ndim != 1:
        raise ParameterError(f"estimate and truth shapes differ: {est.shape} vs {true.shape}")
    if est.size < min_length:
        raise ParameterError(f"need at least {min_length} pairs, got {est.size}")
    return est, true


def error1(est, true):
    """Mean absolute error in BPM."""
    est, true = _pair(est, true)
    return float(np.mean(np.abs(est - true)))


def error2(est, true):
    """Mean absolute error relative to the truth (a ratio, not a percentage)."""
    est, true = _pair(est, true)
    if np.any(true <= 0):
        raise ParameterError("ground-truth BPM must be positive")
    return float(np.mean(np.abs(est - true) / true))


class BlandAltman(NamedTuple):
    mu: float
    sigma: float
    loa_low: float
    loa_high: float
    means: np.ndarray
    diffs: np.ndarray


def bland_altman(est, true):
    est, true = _pair(est, true, min_length=2)
    d = est - true
    mu = float(np.mean(d))
    sigma = float(np.std(d, ddof=1))
    return BlandAltman(mu, sigma, mu - 1.96 * sigma, mu + 1.96 * sigma, (est + true) / 2, d)


def pearson(est, true):
    est, true = _pair(est, true, min_length=2)
    a = est - est.mean()
    b = true - true.mean()
    na, nb = np.sqrt(a @ a), np.sqrt(b @ b)
    if na == 0 or nb == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class AgreementSummary:
    error1: float
    error2: float
    loa_low: float | None
    loa_high: float | None
    sigma: float | None
    pearson_r: float | None
    n_windows: int
    mu: float | None = field(default=None)

    def to_json_dict(self):
        """Keys and units used by the CLI's metrics files (Error2 in percent)."""
        return {
            "error1_bpm": self.error1,
            "error2_pct": 100.0 * self.error2,
            "loa_low": self.loa_low,
            "loa_high": self.loa_high,
            "sigma_bpm": self.sigma,
            "pearson_r": self.pearson_r,
            "n_windows": self.n_windows,
        }


def summarize(est, true):
    """All agreement measures for paired estimates; undefined ones become ``None``."""
    est, true = _pair(est, true)
    ba = bland_altman(est, true) if est.size >= 2 else None
    try:
        r = pearson(est, true)
    except (UndefinedCorrelationError, ParameterError):
        r = None
    return AgreementSummary(
        error1=error1(est, true),
        error2=error2(est, true),
        loa_low=None if ba is None else ba.loa_low,
        loa_high=None if ba is None else ba.loa_high,
        sigma=None if ba is None else ba.sigma,
        pearson_r=r,
        n_windows=int(est.size),
        mu=None if ba is None else ba.mu,
    )


def aggregate(per_recording):
    """Cross-recording summary.

    Error1/Error2 are averaged over recordings; Bland-Altman and Pearson are
    computed on the pooled windows. `per_recording` is a sequence of
    ``(est, true)`` array pairs.
    """
    pairs = [_pair(e, t) for e, t in per_recording if len(e)]
    if not pairs:
        raise ParameterError("no recordings with ground truth to aggregate")
    pooled = summarize(np.concatenate([p[0] for p in pairs]), np.concatenate([p[1] for p in pairs]))
    e1 = float(np.mean([error1(*p) for p in pairs]))
    e2 = float(np.mean([error2(*p) for p in pairs]))
    return AgreementSummary(**{**asdict(pooled), "error1": e1, "error2": e2})
