"""Singular spectrum analysis and accelerometer-guided artifact removal."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import DegenerateInputError, ParameterError, check_1d

#: singular values below this fraction of the largest are never classified
NOISE_FLOOR = 1e-3
PAIR_RATIO = 0.9
PAIR_BIN_GAP = 2


@dataclass(frozen=True, eq=False)
class SsaComponent:
    sigma: float
    series: np.ndarray
    dominant_bin: int
    indices: tuple[int, ...]
    noise_floor: bool = False


class CleanseResult(NamedTuple):
    signal: np.ndarray
    all_excluded: bool
    removed: tuple[int, ...]  # dominant bins of the dropped components
    exclusions: frozenset


def embed(y, L):
    """L-trajectory (Hankel) matrix: ``Y[i, j] = y[i + j]``, shape ``(L, M - L + 1)``."""
    y = check_1d(y, "y")
    M = y.size
    if not (2 <= L and 2 * L < M):
        raise ParameterError(f"window length L must satisfy 2 <= L < M/2, got L={L}, M={M}")
    K = M - L + 1
    return np.lib.stride_tricks.sliding_window_view(y, K)[:L].copy()


def _antidiagonal_counts(L, K):
    s = np.arange(L + K - 1)
    return np.minimum.reduce([s + 1, np.full_like(s, L), np.full_like(s, K), L + K - 1 - s])


def diagonal_average(mat):
    """Average each anti-diagonal ``i + j = s`` of `mat` into ``out[s]``."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or min(mat.shape) < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {mat.shape}")
    L, K = mat.shape
    flipped = mat[::-1]
    sums = np.array([np.trace(flipped, offset=o) for o in range(-(L - 1), K)])
    return sums / _antidiagonal_counts(L, K)


def _elementary_series(u, sigma, vt, M):
    """Diagonal averages of every rank-one term ``sigma_i u_i v_i^T`` at once.

    The anti-diagonal sums of an outer product are the full convolution of
    its two factors, done here column-wise through the FFT.
    """
    L, d = u.shape
    K = vt.shape[1]
    nfft = 1 << (M - 1).bit_length()
    fu = np.fft.rfft(u * sigma, nfft, axis=0)
    fv = np.fft.rfft(vt.T, nfft, axis=0)
    sums = np.fft.irfft(fu * fv, nfft, axis=0)[:M]
    return (sums / _antidiagonal_counts(L, K)[:, None]).T  # (d, M)


def dominant_bins(series, N=4096):
    """Periodogram argmax (1-based, physical half) of each row of `series`."""
    series = np.atleast_2d(series)
    spec = np.abs(np.fft.rfft(series, N, axis=1)) ** 2
    return np.argmax(spec, axis=1) + 1


def decompose(y, L=400, N=4096):
    """Split `y` into grouped SSA components ordered by singular value.

    Adjacent elementary components ``i, i+1`` are merged when their singular
    values are within 10% and their dominant bins differ by at most two; every
    other component stands alone. The component series sum back to `y`.
    """
    y = check_1d(y, "y")
    if not np.any(y):
        raise DegenerateInputError("SSA of an all-zero window is undefined")
    Y = embed(y, L)
    u, sigma, vt = np.linalg.svd(Y, full_matrices=False)
    elementary = _elementary_series(u, sigma, vt, y.size)
    bins = dominant_bins(elementary, N)
    floor = NOISE_FLOOR * sigma[0]

    groups = []
    i = 0
    d = sigma.size
    while i < d:
        if (
            i + 1 < d
            and sigma[i] > 0
            and sigma[i + 1] / sigma[i] >= PAIR_RATIO
            and abs(int(bins[i]) - int(bins[i + 1])) <= PAIR_BIN_GAP
        ):
            groups.append((i, i + 1))
            i += 2
        else:
            groups.append((i,))
            i += 1

    components = []
    for idx in groups:
        series = elementary[list(idx)].sum(axis=0)
        dom = int(bins[idx[0]]) if len(idx) == 1 else int(dominant_bins(series, N)[0])
        components.append(
            SsaComponent(
                sigma=float(sigma[idx[0]]),
                series=series,
                dominant_bin=dom,
                indices=idx,
                noise_floor=bool(sigma[idx[0]] < floor),
            )
        )
    return components


def _local_maxima(values):
    """0-based indices of strict-left / weak-right interior maxima."""
    v = values
    k = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])) + 1
    return k


def accel_dominant_bins(acc, N=4096, ratio=0.5):
    """Bins of accelerometer spectral peaks above `ratio` of each axis' maximum.

    `acc` is a sequence of equally long axis windows (typically three).
    """
    acc = np.atleast_2d(np.asarray(acc, dtype=np.float64))
    if acc.size == 0:
        raise ValueError("acceleration windows must be non-empty")
    out = set()
    for axis in acc:
        spec = np.abs(np.fft.rfft(axis, N)) ** 2
        peak = spec.max()
        if peak <= 0:
            continue
        k = _local_maxima(spec)
        out.update(int(i) + 1 for i in k if spec[i] > ratio * peak)
    return frozenset(out)


def harmonic_bin(n_f):
    """Bin of the first harmonic of 1-based bin `n_f`."""
    return 2 * (n_f - 1) + 1


def refine_exclusions(f_acc, n_prev, delta=10):
    """Drop accelerometer bins that fall within `delta` of the previous HR or its harmonic."""
    if delta < 0:
        raise ParameterError(f"delta must be >= 0, got {delta}")
    if n_prev is None:
        return frozenset(f_acc)
    guards = (n_prev, harmonic_bin(n_prev))
    return frozenset(b for b in f_acc if all(abs(b - g) > delta for g in guards))


def cleanse(y, acc, n_prev=None, L=400, delta=10, N=4096):
    """Remove SSA components whose dominant bin matches an accelerometer peak.

    Returns the reconstructed window together with a flag that is set when
    every classified component would have been removed; in that case the raw
    window is returned unchanged.
    """
    y = check_1d(y, "y")
    exclusions = refine_exclusions(accel_dominant_bins(acc, N), n_prev, delta)
    if not exclusions:
        return CleanseResult(y.copy(), False, (), exclusions)
    components = decompose(y, L, N)
    keep = np.zeros_like(y)
    removed = []
    n_classified = 0
    for comp in components:
        if comp.noise_floor:
            keep += comp.series
            continue
        n_classified += 1
        if comp.dominant_bin in exclusions:
            removed.append(comp.dominant_bin)
        else:
            keep += comp.series
    if removed and len(removed) == n_classified:
        return CleanseResult(y.copy(), True, tuple(removed), exclusions)
    return CleanseResult(keep, False, tuple(removed), exclusions)
