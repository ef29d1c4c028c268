"""scikit-learn style front end to the full heart-rate pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import metrics, ssa, ssr, tracker
from ._validation import ParameterError, samples_per
from .ingest import Recording, windows
from .metrics import HrEstimate
from .preprocess import FilterSpec, bandpass, design_bandpass, second_difference

INIT_MODES = ("first-window", "truth")


def check_recording(X, fs=125.0):
    """Accept a :class:`Recording` or an ``(n_samples, 4|5)`` array."""
    if isinstance(X, Recording):
        return X
    X = check_array(X, ensure_min_samples=2)
    return Recording.from_array(X, fs=fs)


class SparseSpectrum(TransformerMixin, BaseEstimator):
    """Row-wise sparse spectra: ``(n_windows, M)`` signals to ``(n_windows, N)`` power."""

    def __init__(self, n_bins=4096, fs=125.0, p=0.8, lam=0.1, iters=5, low_cut=0.4, high_cut=5.0):
        self.n_bins = n_bins
        self.fs = fs
        self.p = p
        self.lam = lam
        self.iters = iters
        self.low_cut = low_cut
        self.high_cut = high_cut

    def fit(self, X, y=None):
        X = check_array(X)
        self.params_ = ssr.FocussParams(self.p, self.lam, self.iters)
        self.dictionary_ = ssr.build_dictionary(
            X.shape[1], self.n_bins, self.fs, low_cut=self.low_cut, high_cut=self.high_cut
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "dictionary_")
        X = check_array(X)
        return np.vstack(
            [ssr.focuss_spectrum(row, self.dictionary_, self.params_).values for row in X]
        )


class TroikaHeartRate(BaseEstimator):
    """Per-window heart rate from wrist PPG and 3-axis acceleration.

    ``predict`` takes one recording (a :class:`~troika.ingest.Recording` or an
    ``(n_samples, 4|5)`` array with columns ``ppg, acc_x, acc_y, acc_z[, ecg]``)
    and returns one BPM value per analysis window. The tracker state lives only
    for the duration of a call, so separate recordings never share state.

    The three ablation switches ``use_ssa``, ``use_sparse`` and ``verify``
    each disable one stage: SSA artifact removal, the sparse spectrum (replaced
    by a periodogram) and the tracker's verification rules.

    ``init`` selects how the first window seeds the tracker: ``"first-window"``
    assumes the wearer is still and takes the strongest peak between 42 and 180
    BPM; ``"truth"`` starts from the first window's ground truth (or from
    ``init_bpm`` when given).
    """

    def __init__(
        self,
        fs=125.0,
        window_seconds=8.0,
        step_seconds=2.0,
        low_cut=0.4,
        high_cut=5.0,
        filter_taps=251,
        ssa_length=400,
        guard_bins=10,
        n_bins=4096,
        p=0.8,
        lam=0.1,
        iters=5,
        delta_s=16,
        delta_s_wide=20,
        eta_ratio=0.3,
        theta=6,
        tau=2,
        h=3,
        use_ssa=True,
        use_sparse=True,
        verify=True,
        init="first-window",
        init_bpm=None,
    ):
        self.fs = fs
        self.window_seconds = window_seconds
        self.step_seconds = step_seconds
        self.low_cut = low_cut
        self.high_cut = high_cut
        self.filter_taps = filter_taps
        self.ssa_length = ssa_length
        self.guard_bins = guard_bins
        self.n_bins = n_bins
        self.p = p
        self.lam = lam
        self.iters = iters
        self.delta_s = delta_s
        self.delta_s_wide = delta_s_wide
        self.eta_ratio = eta_ratio
        self.theta = theta
        self.tau = tau
        self.h = h
        self.use_ssa = use_ssa
        self.use_sparse = use_sparse
        self.verify = verify
        self.init = init
        self.init_bpm = init_bpm

    def fit(self, X=None, y=None):
        """Validate the configuration and precompute the filter and dictionary.

        The pipeline has no learned parameters; `X` and `y` are ignored.
        """
        if self.init not in INIT_MODES:
            raise ParameterError(f"init must be one of {INIT_MODES}, got {self.init!r}")
        if self.step_seconds > self.window_seconds:
            raise ParameterError("step_seconds must not exceed window_seconds")
        for name in ("ssa_length", "n_bins", "iters", "theta", "h", "delta_s", "delta_s_wide"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be a positive integer")
        if self.tau < 0 or self.guard_bins < 0:
            raise ParameterError("tau and guard_bins must be >= 0")
        self.window_length_ = samples_per(self.window_seconds, self.fs, "window_seconds")
        self.filter_spec_ = FilterSpec(self.low_cut, self.high_cut, self.filter_taps, self.fs)
        self.kernel_ = design_bandpass(self.filter_spec_)
        self.focuss_params_ = ssr.FocussParams(self.p, self.lam, self.iters)
        self.dictionary_ = ssr.build_dictionary(
            self.window_length_ - 2, self.n_bins, self.fs, low_cut=self.low_cut, high_cut=self.high_cut
        )
        self.tracker_params_ = tracker.TrackerParams(
            delta_s=self.delta_s,
            delta_s_wide=self.delta_s_wide,
            eta_ratio=self.eta_ratio,
            theta=self.theta,
            tau=self.tau,
            h=self.h,
            verify=self.verify,
        )
        return self

    def _filtered(self, rec):
        def bp(x):
            return bandpass(x, self.filter_spec_, self.kernel_)

        return Recording(
            ppg=bp(rec.ppg),
            acc_x=bp(rec.acc_x),
            acc_y=bp(rec.acc_y),
            acc_z=bp(rec.acc_z),
            fs=rec.fs,
            ecg=rec.ecg,
            subject_id=rec.subject_id,
        )

    def spectrum(self, y, window=None, difference=True):
        """Spectrum of one (cleansed) PPG window, by default after second differencing.

        Without differencing the window is trimmed by one sample at each end
        so it still matches the dictionary.
        """
        z = second_difference(y) if difference else np.asarray(y)[1:-1]
        if self.use_sparse:
            return ssr.focuss_spectrum(z, self.dictionary_, self.focuss_params_, window=window)
        return ssr.periodogram(z, self.n_bins, self.fs)

    def estimate(self, X, truth=None, return_spectra=False):
        """Run the pipeline and return one :class:`HrEstimate` per window.

        `truth` optionally supplies per-window ground truth (a sequence aligned
        with the windows, ``None`` for unknown). Otherwise the ECG channel is
        used when present.
        """
        check_is_fitted(self, "dictionary_")
        rec = check_recording(X, self.fs)
        if rec.fs != self.fs:
            raise ParameterError(f"recording sampled at {rec.fs} Hz, estimator configured for {self.fs} Hz")
        frames = windows(self._filtered(rec), self.window_seconds, self.step_seconds)
        if truth is None and rec.has_ecg:
            truth = metrics.window_truths(
                rec.ecg, rec.fs, [w.start_sample for w in frames], self.window_length_
            )
        if truth is None:
            truth = [None] * len(frames)
        if len(truth) != len(frames):
            raise ParameterError(f"{len(truth)} truth values for {len(frames)} windows")

        N, fs = self.n_bins, self.fs
        params = self.tracker_params_
        state = None
        if self.init == "truth":
            seed_bpm = self.init_bpm if self.init_bpm is not None else truth[0]
            if seed_bpm is None:
                raise ParameterError("init='truth' needs init_bpm or ground truth for the first window")
            n0 = ssr.hz_to_bin(seed_bpm / 60.0, N, fs)
            state = tracker.TrackerState(
                n0, (ssr.bin_to_bpm(n0, N, fs),), N, fs, delta_s=params.delta_s
            )

        out, spectra = [], []
        for w, true_bpm in zip(frames, truth):
            flagged = False
            y = w.ppg
            if self.use_ssa:
                n_prev = None if state is None else state.n_prev
                res = ssa.cleanse(y, w.acc, n_prev, self.ssa_length, self.guard_bins, N)
                y, flagged = res.signal, res.all_excluded
            spec = self.spectrum(y, window=w.index)
            if return_spectra:
                spectra.append(spec)
            if state is None:
                # differencing boosts harmonics; seed on the plain PPG spectrum
                state = tracker.initialize(self.spectrum(y, w.index, difference=False), params)
                est = HrEstimate(w.index, state.bpm_history[-1], bin=state.n_prev)
            else:
                est, state = tracker.step(spec, state, params, w.index)
            out.append(
                HrEstimate(
                    window_index=w.index,
                    bpm_est=est.bpm_est,
                    bpm_true=true_bpm,
                    case=est.case,
                    rule1_fired=est.rule1_fired,
                    rule2_fired=est.rule2_fired,
                    bin=est.bin,
                    t_start=w.t_start,
                    ssa_flagged=flagged,
                )
            )
        return (out, spectra) if return_spectra else out

    def predict(self, X):
        return np.array([e.bpm_est for e in self.estimate(X)])

    def score(self, X, y=None):
        """Negative Error1 against `y` (or the ECG-derived truth when `y` is None)."""
        ests = self.estimate(X, truth=y)
        pairs = [(e.bpm_est, e.bpm_true) for e in ests if e.bpm_true is not None]
        if not pairs:
            raise ParameterError("no ground truth available to score against")
        est, true = map(np.array, zip(*pairs))
        return -metrics.error1(est, true)
