"""Heart-rate estimation from wrist PPG during intensive motion.

Signal decomposition (SSA) removes accelerometer-correlated artifacts, a
regularized FOCUSS solver produces a sparse high-resolution spectrum, and a
verified peak tracker follows the heart-rate line from window to window.
"""

from ._validation import DegenerateInputError, EmptyInputError, LengthError, ParameterError
from .estimator import SparseSpectrum, TroikaHeartRate, check_recording
from .ingest import (
    ArtifactTone,
    Recording,
    RecordingFormatError,
    SynthSpec,
    Window,
    generate_synthetic,
    load_recording,
    save_recording,
    windows,
)
from .metrics import AgreementSummary, HrEstimate, summarize
from .preprocess import BandpassFilter, FilterSpec, bandpass, second_difference
from .ssr import Spectrum, bin_to_bpm, build_dictionary, focuss_spectrum, periodogram

__all__ = [
    "AgreementSummary",
    "ArtifactTone",
    "BandpassFilter",
    "DegenerateInputError",
    "EmptyInputError",
    "FilterSpec",
    "HrEstimate",
    "LengthError",
    "ParameterError",
    "Recording",
    "RecordingFormatError",
    "SparseSpectrum",
    "Spectrum",
    "SynthSpec",
    "TroikaHeartRate",
    "Window",
    "bandpass",
    "bin_to_bpm",
    "build_dictionary",
    "check_recording",
    "focuss_spectrum",
    "generate_synthetic",
    "load_recording",
    "periodogram",
    "save_recording",
    "second_difference",
    "summarize",
    "windows",
]

__version__ = "0.1.0"
