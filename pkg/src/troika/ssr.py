"""Sparse line-spectrum estimation over a pruned Fourier dictionary.

Bins are 1-based throughout: bin ``k`` of an ``N``-point grid sits at
``(k - 1) / N * fs`` Hz, so bin 1 is DC and the conjugate mirror of bin ``k``
is bin ``N - k + 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import DegenerateInputError, LengthError, ParameterError, check_1d


class NumericError(ArithmeticError):
    """A linear solve inside the sparse solver failed."""


def bin_to_hz(n_f, N, fs):
    n_f = np.asarray(n_f)
    if np.any(n_f < 1) or np.any(n_f > N):
        raise ParameterError(f"bin index must lie in [1, {N}], got {n_f}")
    return (n_f - 1) / N * fs


def bin_to_bpm(n_f, N=4096, fs=125.0):
    """Beats per minute at 1-based bin `n_f` of an `N`-point grid."""
    out = 60.0 * bin_to_hz(n_f, N, fs)
    return float(out) if np.ndim(out) == 0 else out


def hz_to_bin(f, N, fs):
    """Nearest 1-based bin to frequency `f`."""
    return int(math.floor(f / fs * N + 0.5)) + 1


def mirror_bin(n_f, N):
    return N - n_f + 2


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Non-negative spectrum on ``N`` bins; ``values[k - 1]`` is bin ``k``."""

    values: np.ndarray
    fs: float

    @property
    def N(self):
        return self.values.size

    def at(self, n_f):
        return self.values[np.asarray(n_f) - 1]

    def physical(self):
        """(bins, Hz, values) over the physical band ``[0, fs/2]``."""
        bins = np.arange(1, self.N // 2 + 2)
        return bins, (bins - 1) / self.N * self.fs, self.values[bins - 1]


def periodogram(y, N=4096, fs=125.0):
    """``|DFT_N(y zero-padded)|**2 / len(y)``."""
    y = check_1d(y, "y")
    if y.size > N:
        raise LengthError(f"signal length {y.size} exceeds the FFT size {N}")
    X = np.fft.fft(y, N)
    return Spectrum((X.real**2 + X.imag**2) / y.size, fs)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Columns ``exp(j 2 pi m (k - 1) / N)`` for the retained bins ``k``."""

    rows: int
    N: int
    fs: float
    bins: np.ndarray
    matrix: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)

    @property
    def n_columns(self):
        return self.bins.size

    def expand(self, coef):
        """Scatter retained-column coefficients onto the full ``N`` grid."""
        full = np.zeros(self.N, dtype=np.result_type(coef, np.complex128))
        full[self.bins - 1] = coef
        return full


def default_margins(N, fs, low_cut=0.4):
    """Transition margins (in bins) used to widen the retained band."""
    return low_cut / fs * N - 1.0, 2.0 / fs * N


def retained_bins(N, fs, df1=None, df2=None, low_cut=0.4, high_cut=5.0):
    """1-based bins of the band ``[low_cut, high_cut]`` Hz, widened and mirrored."""
    d1, d2 = default_margins(N, fs, low_cut)
    df1 = d1 if df1 is None else df1
    df2 = d2 if df2 is None else df2
    lo = low_cut / fs * N + 1 - df1
    hi = high_cut / fs * N + 1 + df2
    # the margins are real-valued; snap bounds inward with a tolerance for rounding
    lo_bin = max(1, math.ceil(lo - 1e-9))
    hi_bin = min(N // 2 + 1, math.floor(hi + 1e-9))
    if hi_bin < lo_bin:
        raise ParameterError(f"empty retained band: [{lo}, {hi}] at N={N}, fs={fs}")
    lower = np.arange(lo_bin, hi_bin + 1)
    # DC has no mirror inside [1, N]
    mirror = mirror_bin(lower[lower > 1], N)
    return np.unique(np.concatenate([lower, mirror]))


def build_dictionary(rows, N=4096, fs=125.0, df1=None, df2=None, low_cut=0.4, high_cut=5.0):
    """Pruned complex-exponential dictionary with ``rows`` samples per column.

    With the default margins the lower band runs from bin 2 up to
    ``(high_cut + 2 Hz)`` and is closed under conjugate mirroring.
    """
    if not 1 <= rows <= N:
        raise ParameterError(f"need 1 <= rows <= N, got rows={rows}, N={N}")
    bins = retained_bins(N, fs, df1, df2, low_cut, high_cut)
    m = np.arange(rows)[:, None]
    phi = np.exp(2j * np.pi * m * (bins - 1)[None, :] / N)
    gram = phi.conj().T @ phi
    return Dictionary(rows, N, fs, bins, phi, gram)


@dataclass(frozen=True)
class FocussParams:
    p: float = 0.8
    lam: float = 0.1
    iters: int = 5

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ParameterError(f"p must lie in (0, 1], got {self.p}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.iters < 1:
            raise ParameterError(f"iters must be a positive integer, got {self.iters}")


def focuss_objective(y, dictionary, coef, lam, p):
    """``||y - Phi x||^2 + lam * sum |x|^p`` over the retained columns."""
    r = np.asarray(y) - dictionary.matrix @ coef
    return float(np.real(np.vdot(r, r)) + lam * np.sum(np.abs(coef) ** p))


def focuss_iterates(y, dictionary, params=FocussParams(), window=None):
    """Run regularized FOCUSS on `y` and return every iterate, starting at x0.

    Each step minimises the quadratic majoriser of the objective at the
    current iterate, which gives

        x <- W (W G W + (lam p / 2) I)^{-1} W Phi^H y,   W = diag(|x|^{1 - p/2}),

    with ``G = Phi^H Phi`` precomputed. This is the retained-column (primal)
    form of ``W (Phi W)^H ((Phi W)(Phi W)^H + c I)^{-1} y``; the two agree by
    the push-through identity, and the primal system is the smaller one.
    """
    y = check_1d(y, "y")
    if y.size != dictionary.rows:
        raise LengthError(f"signal has {y.size} samples, dictionary expects {dictionary.rows}")
    if not np.any(y):
        raise DegenerateInputError("cannot estimate the spectrum of an all-zero signal")
    b = dictionary.matrix.conj().T @ y
    x = b / y.size
    scale = np.max(np.abs(x))
    if scale == 0:
        raise DegenerateInputError("signal is orthogonal to every retained column")
    ridge = params.lam * params.p / 2
    eye = np.eye(dictionary.n_columns)
    out = [x]
    for _ in range(params.iters):
        a = np.abs(x)
        a = np.maximum(a, 1e-12 * a.max())
        w = a ** (1 - params.p / 2)
        system = w[:, None] * dictionary.gram * w[None, :] + ridge * eye
        try:
            z = np.linalg.solve(system, w * b)
        except np.linalg.LinAlgError as exc:
            where = "" if window is None else f" in window {window}"
            raise NumericError(f"FOCUSS solve failed{where}: {exc}") from exc
        x = w * z
        out.append(x)
    return out


def focuss_spectrum(y, dictionary, params=FocussParams(), normalize=True, window=None):
    """Sparse power spectrum ``|x_k|**2`` of `y` on the dictionary grid.

    With ``normalize`` the signal is first scaled to unit RMS so the
    regularisation weight means the same thing for every window.
    """
    y = check_1d(y, "y")
    if normalize:
        rms = np.sqrt(np.mean(y**2))
        if rms == 0:
            raise DegenerateInputError("cannot estimate the spectrum of an all-zero signal")
        y = y / rms
    x = focuss_iterates(y, dictionary, params, window=window)[-1]
    full = dictionary.expand(x)
    return Spectrum(full.real**2 + full.imag**2, dictionary.fs)
