"""Spectral peak tracking with harmonic-pair selection and verification rules.

The tracker is a pure state machine: :func:`step` takes a spectrum and a
:class:`TrackerState` and returns the estimate plus a new state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .metrics import HrEstimate
from .ssa import harmonic_bin
from .ssr import bin_to_bpm


class InitError(ValueError):
    """The initialisation spectrum carries no peak."""


@dataclass(frozen=True)
class TrackerParams:
    delta_s: int = 16
    delta_s_wide: int = 20
    eta_ratio: float = 0.3
    theta: int = 6
    tau: int = 2
    h: int = 3
    harmonic_tol: int = 3
    max_peaks: int = 3
    trend_window: int = 20
    trend_threshold: float = 3.0
    init_band: tuple[float, float] = (0.7, 3.0)
    verify: bool = True


@dataclass(frozen=True)
class TrackerState:
    n_prev: int
    bpm_history: tuple[float, ...]
    N: int
    fs: float
    stall_count: int = 0
    delta_s: int = 16
    n_trend: int = 0


class PeakCandidates(NamedTuple):
    fundamental: list  # [(bin, amplitude)], highest first
    harmonic: list


class Selection(NamedTuple):
    n_hat: int
    case: int


class Verified(NamedTuple):
    n_cur: int
    rule1: bool
    rule2: bool


def _band_bins(lo_hz, hi_hz, N, fs):
    return math.ceil(lo_hz * N / fs) + 1, math.floor(hi_hz * N / fs) + 1


def initialize(spectrum, params=TrackerParams()):
    """Seed the tracker at the highest peak inside the initialisation band."""
    values = spectrum.values
    lo, hi = _band_bins(*params.init_band, spectrum.N, spectrum.fs)
    band = values[lo - 1 : hi]
    if not np.any(band > 0):
        raise InitError("spectrum is zero over the initialisation band")
    n0 = lo + int(np.argmax(band))
    return TrackerState(
        n_prev=n0,
        bpm_history=(bin_to_bpm(n0, spectrum.N, spectrum.fs),),
        N=spectrum.N,
        fs=spectrum.fs,
        delta_s=params.delta_s,
    )


def _clip_range(lo, hi, N):
    return max(lo, 2), min(hi, N // 2)


def _peaks_in(values, lo, hi):
    """(bin, amplitude) of positive local maxima with 1-based bins in [lo, hi]."""
    if hi < lo:
        return []
    k = np.arange(lo - 1, hi)  # 0-based, interior of the full spectrum
    v = values
    mask = (v[k] > v[k - 1]) & (v[k] >= v[k + 1]) & (v[k] > 0)
    return [(int(i) + 1, float(v[i])) for i in k[mask]]


def search_ranges(state):
    """Fundamental range R0 and harmonic range R1 as inclusive 1-based bin bounds."""
    r0 = _clip_range(state.n_prev - state.delta_s, state.n_prev + state.delta_s, state.N)
    r1 = _clip_range(
        harmonic_bin(state.n_prev - state.delta_s),
        harmonic_bin(state.n_prev + state.delta_s),
        state.N,
    )
    return r0, r1


def select_candidates(spectrum, state, params=TrackerParams()):
    """Up to `max_peaks` highest peaks in each range, at least 30% of the R0 maximum."""
    values = spectrum.values
    (a0, b0), (a1, b1) = search_ranges(state)
    eta = params.eta_ratio * float(values[a0 - 1 : b0].max()) if b0 >= a0 else 0.0

    def keep(peaks):
        peaks = [p for p in peaks if p[1] >= eta]
        peaks.sort(key=lambda p: (-p[1], p[0]))
        return peaks[: params.max_peaks]

    return PeakCandidates(keep(_peaks_in(values, a0, b0)), keep(_peaks_in(values, a1, b1)))


def select_peak(cands, state, params=TrackerParams()):
    # Case 1: a fundamental with a matching first harmonic, most salient fundamental first
    for n0, _ in cands.fundamental:
        if any(abs(n1 - harmonic_bin(n0)) <= params.harmonic_tol for n1, _ in cands.harmonic):
            return Selection(n0, 1)
    # Case 2: whichever candidate (harmonics folded down) is nearest the previous bin
    pool = [n0 for n0, _ in cands.fundamental] + [n1 // 2 + 1 for n1, _ in cands.harmonic]
    if pool:
        best = min(pool, key=lambda n: abs(n - state.n_prev))
        return Selection(best, 2)
    return Selection(state.n_prev, 3)


def update_trend(bpm_history, params=TrackerParams()):
    """Direction (-1, 0, +1) of a cubic extrapolation of the recent BPM history."""
    hist = np.asarray(bpm_history[-params.trend_window :], dtype=np.float64)
    n = hist.size
    if n < 4:
        return 0
    idx = np.arange(1, n + 1, dtype=np.float64)
    coef = np.polyfit(idx, hist, 3)
    predicted = float(np.polyval(coef, n + 1))
    change = predicted - hist[-1]
    if change >= params.trend_threshold:
        return 1
    if change <= -params.trend_threshold:
        return -1
    return 0


def verify(n_hat, case, state, params=TrackerParams()):
    """Apply the jump limit (rule 1) and the stall breaker (rule 2).

    ``state.stall_count`` must already count the current window.
    """
    n_cur = n_hat
    rule1 = False
    diff = n_hat - state.n_prev
    if diff >= params.theta:
        n_cur, rule1 = state.n_prev + params.tau, True
    elif diff <= -params.theta:
        n_cur, rule1 = state.n_prev - params.tau, True
    rule2 = case == 3 and state.stall_count >= params.h
    if rule2:
        n_cur = state.n_prev + 2 * state.n_trend
    return Verified(n_cur, rule1, rule2)


def step(spectrum, state, params=TrackerParams(), window_index=0, t_start=0.0):
    """Track one window: candidates, selection, trend, verification."""
    cands = select_candidates(spectrum, state, params)
    n_hat, case = select_peak(cands, state, params)
    n_trend = update_trend(state.bpm_history, params)
    stall = state.stall_count + 1 if case == 3 else 0
    probe = replace(state, stall_count=stall, n_trend=n_trend)
    if params.verify:
        n_cur, rule1, rule2 = verify(n_hat, case, probe, params)
    else:
        n_cur, rule1, rule2 = n_hat, False, False
    if rule2:
        delta_s = params.delta_s_wide
    elif case != 3:
        delta_s = params.delta_s
    else:
        delta_s = state.delta_s
    n_cur = int(min(max(n_cur, 2), state.N // 2))
    bpm = bin_to_bpm(n_cur, state.N, state.fs)
    new_state = replace(
        probe,
        n_prev=n_cur,
        bpm_history=(state.bpm_history + (bpm,))[-max(params.trend_window, 1) :],
        delta_s=delta_s,
    )
    est = HrEstimate(
        window_index=window_index,
        bpm_est=bpm,
        case=case,
        rule1_fired=rule1,
        rule2_fired=rule2,
        bin=n_cur,
        t_start=t_start,
    )
    return est, new_state
