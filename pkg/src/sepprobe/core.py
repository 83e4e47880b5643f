"""Waveform container, WAV file I/O, and STFT/ISTFT primitives.

Everything in this module is pure: inputs are never mutated and every
function returns fresh arrays. The toolkit standardizes on mono float64
samples in nominal range [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile as _wavfile

PCM16_SCALE = 32768  # int16 full scale; decode divides, encode multiplies
WINDOW_KINDS = ("hann", "rectangular")


class WavFormatError(ValueError):
    """Raised for malformed, empty, or unsupported WAV files."""


class ColaError(ValueError):
    """Raised when an STFT config does not satisfy constant overlap-add."""


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled mono signal.

    Attributes:
        samples: 1-D float64 array, all values finite.
        sample_rate_hz: sampling rate in Hz, strictly positive.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        rate = int(self.sample_rate_hz)
        if rate <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", rate)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters for :func:`stft` / :func:`istft`.

    The default (hann, 256/128/256) satisfies constant overlap-add at
    8 kHz with 32 ms windows and 50% hop.
    """

    window_len: int = 256
    hop: int = 128
    window: str = "hann"
    fft_len: int = 256

    def __post_init__(self):
        if self.window not in WINDOW_KINDS:
            raise ValueError(f"unknown window {self.window!r}, expected one of {WINDOW_KINDS}")
        if self.window_len <= 0 or self.hop <= 0:
            raise ValueError("window_len and hop must be positive")
        if self.hop > self.window_len:
            raise ValueError(f"hop {self.hop} exceeds window_len {self.window_len}")
        if self.fft_len < self.window_len:
            raise ValueError(f"fft_len {self.fft_len} shorter than window_len {self.window_len}")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    def window_samples(self) -> np.ndarray:
        # periodic (DFT-even) hann: sums to a constant at hop = window_len / k
        if self.window == "hann":
            n = np.arange(self.window_len)
            return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.window_len)
        return np.ones(self.window_len)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT output: complex frames indexed [frame][bin].

    n_samples records the analyzed signal length so that istft can trim
    the trailing zero-pad of the final frame.
    """

    frames: np.ndarray
    config: StftConfig
    sample_rate_hz: int
    n_samples: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {frames.shape}")
        if frames.shape[1] != self.config.n_bins:
            raise ValueError(
                f"expected {self.config.n_bins} bins for fft_len {self.config.fft_len}, "
                f"got {frames.shape[1]}"
            )
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WavWriteReport:
    """Outcome of write_wav. clipped counts samples outside [-1, 1] that
    were saturated during PCM16 encoding (always 0 for float32)."""

    clipped: int
    encoding: str


def read_wav(path: str | Path, channel: int = 0) -> Waveform:
    """Read one channel of a PCM16 or IEEE float32 WAV file.

    PCM16 samples are normalized by 1/32768 so full-scale positive reads
    as 32767/32768. Other encodings are rejected.

    Args:
        path: file to read.
        channel: channel to extract from multichannel files (default first).

    Returns:
        Waveform with float64 samples.
    """
    path = Path(path)
    try:
        rate, data = _wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise WavFormatError(f"malformed WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise WavFormatError(f"empty WAV file {path}")
    if data.ndim == 2:
        if not 0 <= channel < data.shape[1]:
            raise WavFormatError(
                f"channel {channel} out of range for {data.shape[1]}-channel file {path}"
            )
        data = data[:, channel]
    elif channel != 0:
        raise WavFormatError(f"channel {channel} requested from mono file {path}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(
            f"unsupported encoding {data.dtype} in {path}; expected int16 or float32"
        )
    return Waveform(samples=samples, sample_rate_hz=int(rate))


def write_wav(waveform: Waveform, path: str | Path, encoding: str = "float32") -> WavWriteReport:
    """Write a mono WAV file as PCM16 or IEEE float32.

    PCM16 encoding saturates out-of-range samples and reports how many
    were clipped; it never clips silently. Float32 is written verbatim.

    Args:
        waveform: signal to write.
        path: destination file.
        encoding: "float32" (default) or "pcm16".

    Returns:
        WavWriteReport with the clipped-sample count.
    """
    path = Path(path)
    x = waveform.samples
    if encoding == "pcm16":
        clipped = int(np.count_nonzero(np.abs(x) > 1.0))
        ints = np.round(np.clip(x, -1.0, 1.0) * PCM16_SCALE)
        ints = np.clip(ints, -32768, 32767).astype(np.int16)
        _wavfile.write(path, waveform.sample_rate_hz, ints)
        return WavWriteReport(clipped=clipped, encoding=encoding)
    if encoding == "float32":
        _wavfile.write(path, waveform.sample_rate_hz, x.astype(np.float32))
        return WavWriteReport(clipped=0, encoding=encoding)
    raise ValueError(f"unknown encoding {encoding!r}, expected 'pcm16' or 'float32'")


# ---------------------------------------------------------------------------
# STFT / ISTFT
# ---------------------------------------------------------------------------

def _frame_count(n_samples: int, config: StftConfig) -> int:
    return 1 + math.ceil(max(n_samples - config.window_len, 0) / config.hop)


def _overlap_norm(config: StftConfig, n_frames: int, n_out: int) -> np.ndarray:
    """Sum of analysis windows at every output sample position."""
    w = config.window_samples()
    norm = np.zeros(n_out)
    for f in range(n_frames):
        start = f * config.hop
        norm[start:start + config.window_len] += w[: max(0, min(config.window_len, n_out - start))]
    return norm


def check_cola(config: StftConfig, tol: float = 1e-6) -> float:
    """Verify constant overlap-add for a config and return the constant.

    The overlapped window sum is evaluated over many frames and must be
    flat (within tol, relative) across the interior, i.e. at least one
    window length away from either end.

    Raises:
        ColaError: if the interior sum is not constant.
    """
    n_frames = 16
    n_out = (n_frames - 1) * config.hop + config.window_len
    norm = _overlap_norm(config, n_frames, n_out)
    interior = norm[config.window_len: n_out - config.window_len]
    if interior.size == 0:
        interior = norm
    level = float(np.median(interior))
    if level <= 0 or np.max(np.abs(interior - level)) > tol * level:
        raise ColaError(
            f"window {config.window!r} with window_len {config.window_len} and hop "
            f"{config.hop} does not satisfy constant overlap-add"
        )
    return level


def stft(waveform: Waveform, config: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform with analysis-side windowing.

    Frame f covers samples [f * hop, f * hop + window_len); the final
    frame is zero-padded. One-sided spectra (fft_len // 2 + 1 bins).

    Raises:
        ValueError: if the signal is shorter than one window.
    """
    x = waveform.samples
    if x.size < config.window_len:
        raise ValueError(
            f"signal of {x.size} samples is shorter than one window ({config.window_len})"
        )
    n_frames = _frame_count(x.size, config)
    padded = np.zeros((n_frames - 1) * config.hop + config.window_len)
    padded[: x.size] = x
    idx = np.arange(config.window_len)[None, :] + config.hop * np.arange(n_frames)[:, None]
    segments = padded[idx] * config.window_samples()[None, :]
    frames = np.fft.rfft(segments, n=config.fft_len, axis=1)
    return ComplexSpectrogram(
        frames=frames,
        config=config,
        sample_rate_hz=waveform.sample_rate_hz,
        n_samples=x.size,
    )


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Inverse STFT by overlap-add with window-sum normalization.

    Requires a COLA-satisfying config. Positions where the window sum
    vanishes (the very edges of a tapered window) are emitted as zeros.
    Output is trimmed to the analyzed signal length.

    Raises:
        ColaError: if the config does not satisfy constant overlap-add.
    """
    config = spec.config
    check_cola(config)
    n_frames = spec.n_frames
    segments = np.fft.irfft(spec.frames, n=config.fft_len, axis=1)
    n_out = (n_frames - 1) * config.hop + config.fft_len
    out = np.zeros(n_out)
    for f in range(n_frames):
        start = f * config.hop
        out[start:start + config.fft_len] += segments[f]
    norm = _overlap_norm(config, n_frames, n_out)
    live = norm > 1e-10
    out[live] /= norm[live]
    out[~live] = 0.0
    return Waveform(samples=out[: spec.n_samples], sample_rate_hz=spec.sample_rate_hz)
