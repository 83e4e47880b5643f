"""Probing toolkit for source-separation systems: synthetic harmonic
stimuli, spectral and temporal deformations, permutation-aware metrics,
and a batch harness with deterministic reports."""

__version__ = "0.1.0"

from sepprobe.core import (
    ColaError,
    ComplexSpectrogram,
    StftConfig,
    Waveform,
    WavFormatError,
    istft,
    read_wav,
    stft,
    write_wav,
)

__all__ = [
    "ColaError",
    "ComplexSpectrogram",
    "StftConfig",
    "Waveform",
    "WavFormatError",
    "__version__",
    "istft",
    "read_wav",
    "stft",
    "write_wav",
]
