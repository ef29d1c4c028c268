"""Acceptance criteria, one test per criterion.

Each test records a PASS / FAIL / SKIP line (printed in the terminal summary)
with the measured value next to its pinned tolerance, then asserts.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from troika import TroikaHeartRate
from troika.cli import RunConfig, aggregate_dict, process_directory
from troika.metrics import bland_altman, error1, error2, pearson
from troika.ssa import decompose, diagonal_average, embed
from troika.ssr import FocussParams, build_dictionary, focuss_iterates, focuss_objective, focuss_spectrum, periodogram
from troika.ssr import Spectrum, bin_to_bpm
from troika.tracker import PeakCandidates, TrackerParams, TrackerState, select_peak, step, verify

from scenarios import chirp_recording, close_tone_recording, errors

ABLATIONS = {
    "--skip-ssa": dict(use_ssa=False),
    "--use-periodogram": dict(use_sparse=False),
    "--skip-verify": dict(verify=False),
}


def _mean_error(rec, **kw):
    return float(errors(TroikaHeartRate(**kw).fit().estimate(rec)).mean())


@pytest.fixture(scope="module")
def chirp():
    rec = chirp_recording(seed=0, snr_db=0.0)
    t0 = time.perf_counter()
    est = TroikaHeartRate().fit().estimate(rec)
    return rec, est, time.perf_counter() - t0


# -- 1 -------------------------------------------------------------------------


def test_criterion_1_public_dataset(acceptance_report):
    root = os.environ.get("TROIKA_DATASET")
    if not root or not Path(root).is_dir():
        acceptance_report(1, False, "public 12-subject dataset not available (set TROIKA_DATASET to a CSV directory)", skipped=True)
        pytest.skip("TROIKA_DATASET not set")
    t0 = time.perf_counter()
    results, failures = process_directory(RunConfig(input_dir=Path(root)))
    per_recording = (time.perf_counter() - t0) / max(len(results), 1)
    agg = aggregate_dict(results)
    ok = (
        not failures
        and agg["error1_bpm"] is not None
        and agg["error1_bpm"] <= 4.0
        and agg["pearson_r"] >= 0.98
        and per_recording <= 300
    )
    acceptance_report(
        1,
        ok,
        f"error1={agg['error1_bpm']:.2f} BPM (<= 4.0), pearson={agg['pearson_r']:.3f} (>= 0.98), "
        f"{per_recording:.0f} s/recording (<= 300), {len(failures)} failed file(s)",
    )
    assert ok


# -- 2 -------------------------------------------------------------------------


def test_criterion_2_ablations_hurt(chirp, acceptance_report):
    rec_chirp, est_chirp, _ = chirp
    recordings = {
        "close-tone": (close_tone_recording(seed=1), None),
        "chirp": (rec_chirp, float(errors(est_chirp).mean())),
    }
    table = {}
    for name, (rec, full) in recordings.items():
        full = _mean_error(rec) if full is None else full
        table[name] = {"full": full, **{flag: _mean_error(rec, **kw) for flag, kw in ABLATIONS.items()}}
    worse = {flag: [n for n, row in table.items() if row[flag] > row["full"]] for flag in ABLATIONS}
    ok = all(worse.values())
    detail = "; ".join(
        f"{n}: full={row['full']:.2f} " + " ".join(f"{f}={row[f]:.2f}" for f in ABLATIONS) for n, row in table.items()
    )
    acceptance_report(2, ok, f"each ablation worse on >= 1 recording -> {detail}")
    assert ok, worse


# -- 3 -------------------------------------------------------------------------


def test_criterion_3_synthetic_end_to_end(chirp, acceptance_report):
    _, est, seconds = chirp
    err = errors(est)
    ok = err.mean() <= 3.0 and err.max() <= 12.0 and seconds <= 60.0
    acceptance_report(
        3,
        ok,
        f"error1={err.mean():.2f} BPM (<= 3), max |err|={err.max():.2f} BPM (<= 12), runtime={seconds:.1f} s (<= 60)",
    )
    assert ok


# -- 4 -------------------------------------------------------------------------


def _local_maxima(values, lo, hi):
    return [k for k in range(lo, hi + 1) if values[k - 1] > values[k - 2] and values[k - 1] >= values[k]]


def test_criterion_4_sparse_resolution(acceptance_report):
    t0 = time.perf_counter()
    N, fs, rows = 4096, 125.0, 998
    b1, b2 = 80, 85  # 5 bins = 0.153 Hz apart
    m = np.arange(rows)
    y = np.cos(2 * np.pi * (b1 - 1) * m / N) + 0.5 * np.cos(2 * np.pi * (b2 - 1) * m / N + np.pi / 2)
    lo, hi = b1 - 3, b2 + 3  # narrower than one periodogram sidelobe spacing
    s = focuss_spectrum(y, build_dictionary(rows, N, fs)).values
    p = periodogram(y, N, fs).values
    sparse_peaks = _local_maxima(s, lo, hi)
    fft_peaks = _local_maxima(p, lo, hi)
    seconds = time.perf_counter() - t0
    ok = sparse_peaks == [b1, b2] and len(fft_peaks) <= 1 and seconds < 5
    acceptance_report(
        4,
        ok,
        f"tones at bins {b1},{b2} ({(b2 - b1) * fs / N:.3f} Hz apart): FOCUSS maxima {sparse_peaks}, "
        f"periodogram maxima {fft_peaks} in bins [{lo}, {hi}], {seconds:.2f} s (< 5)",
    )
    assert ok


# -- 5 -------------------------------------------------------------------------


def test_criterion_5_ssa_identities(acceptance_report):
    rng = np.random.default_rng(2024)
    worst_sum = worst_embed = 0.0
    for _ in range(100):
        y = rng.standard_normal(1000) * rng.uniform(0.1, 100)
        total = np.sum([c.series for c in decompose(y, 400)], axis=0)
        worst_sum = max(worst_sum, np.linalg.norm(total - y) / np.linalg.norm(y))
        back = diagonal_average(embed(y, 400))
        worst_embed = max(worst_embed, np.linalg.norm(back - y) / np.linalg.norm(y))
    ok = worst_sum <= 1e-8 and worst_embed <= 1e-12
    acceptance_report(
        5, ok, f"100 windows: max rel error sum(components)={worst_sum:.1e} (<= 1e-8), average(embed)={worst_embed:.1e} (<= 1e-12)"
    )
    assert ok


# -- 6 -------------------------------------------------------------------------


def test_criterion_6_focuss_descent(acceptance_report):
    rng = np.random.default_rng(6)
    params = FocussParams()
    dictionary = build_dictionary(998)
    worst_rise = -math.inf
    for _ in range(50):
        y = rng.standard_normal(998)
        y /= np.sqrt(np.mean(y**2))  # the scale the pipeline feeds the solver
        f = [focuss_objective(y, dictionary, x, params.lam, params.p) for x in focuss_iterates(y, dictionary, params)]
        worst_rise = max(worst_rise, max(b - a for a, b in zip(f, f[1:])))
    ok = worst_rise <= 1e-8
    acceptance_report(6, ok, f"50 inputs x 5 iterations: largest objective increase {worst_rise:.2e} (<= 1e-8)")
    assert ok


# -- 7 -------------------------------------------------------------------------


def _tracker_examples():
    N, fs = 4096, 125.0
    st = TrackerState(100, (bin_to_bpm(100),), N, fs)
    checks = {
        "rule1 100->110 gives 102": verify(110, 2, st).n_cur == 102,
        "100->103 unchanged": verify(103, 2, st).n_cur == 103,
        "case1 110/219": select_peak(PeakCandidates([(110, 1.0)], [(219, 1.0)]), st) == (110, 1),
        "case2 {104,120} gives 104": select_peak(PeakCandidates([(104, 1.0), (120, 0.9)], []), st) == (104, 2),
        "case3 holds": select_peak(PeakCandidates([], []), st) == (100, 3),
    }
    hist = tuple(100 + 4.0 * np.arange(20))
    s = TrackerState(100, hist, N, fs)
    empty = Spectrum(np.zeros(N), fs)
    for _ in range(3):
        est, s = step(empty, s, TrackerParams())
    checks["3 stalls, trend +1 -> +2 bins, delta_s=20"] = est.rule2_fired and est.bin == 102 and s.delta_s == 20
    return checks


def test_criterion_7_tracker_invariants(acceptance_report):
    rng = np.random.default_rng(7)
    params = TrackerParams()
    N, fs = 4096, 125.0
    violations = 0
    steps = 0
    for _ in range(300):
        start = int(rng.integers(40, 180))
        s = TrackerState(start, tuple(rng.uniform(60, 180, rng.integers(0, 20))) + (bin_to_bpm(start),), N, fs)
        stall = 0
        for _ in range(int(rng.integers(5, 40))):
            v = np.zeros(N)
            for b in rng.integers(40, 400, rng.integers(0, 5)):
                v[b - 1] = rng.uniform(0.01, 1)
            prev = s.n_prev
            est, s = step(Spectrum(v, fs), s, params)
            steps += 1
            stall = stall + 1 if est.case == 3 else 0
            bound = 2 if est.rule2_fired else params.theta - 1
            ok_step = abs(est.bin - prev) <= bound
            ok_stall = not (est.case == 3 and stall >= params.h and not est.rule2_fired)
            ok_width = s.delta_s in (16, 20) and (s.delta_s == 16 or stall >= params.h)
            violations += not (ok_step and ok_stall and ok_width)
    examples = _tracker_examples()
    ok = violations == 0 and all(examples.values())
    failed = [k for k, v in examples.items() if not v]
    acceptance_report(
        7,
        ok,
        f"{steps} random steps: {violations} invariant violations (bounded step, stall cap, delta_s in {{16,20}}); "
        f"{len(examples) - len(failed)}/{len(examples)} stated examples exact" + (f" (failed: {failed})" if failed else ""),
    )
    assert ok


# -- 8 -------------------------------------------------------------------------


def test_criterion_8_metric_oracles(acceptance_report):
    rng = np.random.default_rng(8)
    true = rng.uniform(50, 190, 1000)
    est = true + rng.normal(0.5, 4.0, 1000)
    e, t = est.tolist(), true.tolist()
    n = len(e)
    d = [a - b for a, b in zip(e, t)]
    mu = math.fsum(d) / n
    sd = math.sqrt(math.fsum((x - mu) ** 2 for x in d) / (n - 1))
    me, mt = math.fsum(e) / n, math.fsum(t) / n
    r = math.fsum((a - me) * (b - mt) for a, b in zip(e, t)) / math.sqrt(
        math.fsum((a - me) ** 2 for a in e) * math.fsum((b - mt) ** 2 for b in t)
    )
    oracle = {
        "error1": math.fsum(abs(x) for x in d) / n,
        "error2": math.fsum(abs(a - b) / b for a, b in zip(e, t)) / n,
        "mu": mu,
        "sigma": sd,
        "loa_low": mu - 1.96 * sd,
        "loa_high": mu + 1.96 * sd,
        "pearson": r,
    }
    ba = bland_altman(est, true)
    got = {
        "error1": error1(est, true),
        "error2": error2(est, true),
        "mu": ba.mu,
        "sigma": ba.sigma,
        "loa_low": ba.loa_low,
        "loa_high": ba.loa_high,
        "pearson": pearson(est, true),
    }
    rel = {k: abs(got[k] - oracle[k]) / abs(oracle[k]) for k in oracle}
    worst = max(rel, key=rel.get)
    ok = rel[worst] <= 1e-10
    acceptance_report(8, ok, f"1000 pairs: worst relative deviation {rel[worst]:.1e} ({worst}) (<= 1e-10)")
    assert ok
