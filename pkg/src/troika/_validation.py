"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np


class ParameterError(ValueError):
    """A parameter lies outside its admissible range."""


class LengthError(ValueError):
    """An input sequence is too short (or too long) for the requested operation."""


class EmptyInputError(LengthError):
    """The input does not contain a single complete analysis window."""


class DegenerateInputError(ValueError):
    """The input carries no information (e.g. an all-zero window)."""


def check_1d(x, name="x", min_length=1, dtype=np.float64):
    """Return `x` as a finite 1-D float array, raising on bad shape or values."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < min_length:
        raise LengthError(f"{name} needs at least {min_length} samples, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or inf")
    return arr


def check_positive(value, name, integer=False):
    if integer and not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if not value > 0:
        raise ParameterError(f"{name} must be positive, got {value!r}")
    return value


def samples_per(seconds, fs, name):
    """Convert a duration to an integral sample count, refusing fractional results."""
    n = seconds * fs
    if abs(n - round(n)) > 1e-9:
        raise ParameterError(f"{name}*fs must be an integer number of samples, got {n}")
    return int(round(n))
