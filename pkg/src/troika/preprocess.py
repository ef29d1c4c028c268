"""Band-limiting and temporal differencing of the raw channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import LengthError, ParameterError, check_1d


@dataclass(frozen=True)
class FilterSpec:
    low_cut: float = 0.4
    high_cut: float = 5.0
    taps: int = 251
    fs: float = 125.0

    def __post_init__(self):
        if not 0 < self.low_cut < self.high_cut < self.fs / 2:
            raise ParameterError(
                f"need 0 < low_cut < high_cut < fs/2, got {self.low_cut}, {self.high_cut}, fs={self.fs}"
            )
        if self.taps < 3 or self.taps % 2 == 0:
            raise ParameterError(f"taps must be odd and >= 3, got {self.taps}")


def design_bandpass(spec):
    """Hamming-windowed sinc band-pass taps, unit gain at the band centre."""
    n = np.arange(spec.taps) - (spec.taps - 1) / 2
    lo = spec.low_cut / spec.fs
    hi = spec.high_cut / spec.fs
    h = 2 * hi * np.sinc(2 * hi * n) - 2 * lo * np.sinc(2 * lo * n)
    h *= np.hamming(spec.taps)
    centre = 0.5 * (lo + hi)
    gain = np.abs(np.sum(h * np.exp(-2j * np.pi * centre * n)))
    return h / gain


def bandpass(signal, spec=None, taps=None):
    """Zero-delay FIR band-pass of `signal`, same length as the input.

    The linear-phase kernel is centred on each output sample, so no group
    delay remains. Edges are extended by symmetric reflection.
    """
    spec = FilterSpec() if spec is None else spec
    x = check_1d(signal, "signal")
    if x.size <= spec.taps:
        raise LengthError(f"signal length {x.size} must exceed the filter length {spec.taps}")
    h = design_bandpass(spec) if taps is None else taps
    half = (spec.taps - 1) // 2
    padded = np.pad(x, half, mode="symmetric")
    return np.convolve(padded, h, mode="valid")


def second_difference(signal):
    """``out[i] = s[i+2] - 2 s[i+1] + s[i]``; two samples shorter than the input."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 3:
        raise LengthError(f"second difference needs at least 3 samples, got {x.size}")
    return x[2:] - 2 * x[1:-1] + x[:-2]


class BandpassFilter(TransformerMixin, BaseEstimator):
    """Column-wise band-pass of a ``(n_samples, n_channels)`` array.

    ``fit`` validates the parameters and designs the kernel; the data are ignored.
    """

    def __init__(self, low_cut=0.4, high_cut=5.0, taps=251, fs=125.0):
        self.low_cut = low_cut
        self.high_cut = high_cut
        self.taps = taps
        self.fs = fs

    def fit(self, X, y=None):
        self.spec_ = FilterSpec(self.low_cut, self.high_cut, self.taps, self.fs)
        self.kernel_ = design_bandpass(self.spec_)
        return self

    def transform(self, X):
        check_is_fitted(self, "kernel_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return bandpass(X, self.spec_, self.kernel_)
        return np.column_stack(
            [bandpass(X[:, j], self.spec_, self.kernel_) for j in range(X.shape[1])]
        )
