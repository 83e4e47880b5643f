"""Synthetic diagnostic stimuli: harmonic tones, alternating two-tone
mixtures with known per-sample activity, mute insertion, and two-file
speech mixing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sepprobe.core import Waveform, read_wav

DEFAULT_RAMP_S = 0.002
NORMALIZE_PEAK = 0.9

MUTE_SOURCE_A = "source_a"
MUTE_SOURCE_B = "source_b"
MUTE_MIXTURE = "mixture"
MUTE_TARGETS = (MUTE_SOURCE_A, MUTE_SOURCE_B, MUTE_MIXTURE)

# Default probe grid: tone periods, mute durations, and number of random
# mute placements per cell.
GRID_PERIODS_MS = (30, 45, 62, 90, 125)
GRID_MUTE_MS = (10, 15, 31, 62, 100)
GRID_SEEDS = 10


@dataclass(frozen=True)
class HarmonicToneSpec:
    """A sum of sinusoids at integer multiples of a fundamental.

    Attributes:
        f0_hz: fundamental frequency, > 0.
        harmonics: which multiples of f0 to include (k >= 1).
        duration_s: tone length in seconds.
        amplitudes: optional per-harmonic amplitude map {k: a_k};
            harmonics absent from the map get amplitude 1.0.
    """

    f0_hz: float
    harmonics: tuple[int, ...] = (1, 2, 3)
    duration_s: float = 1.0
    amplitudes: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.f0_hz <= 0:
            raise ValueError(f"f0_hz must be positive, got {self.f0_hz}")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if len(self.harmonics) == 0:
            raise ValueError("harmonics must be non-empty")
        if any(k < 1 or k != int(k) for k in self.harmonics):
            raise ValueError(f"harmonics must be integers >= 1, got {self.harmonics}")
        for k, a in self.amplitudes:
            if a < 0 or not math.isfinite(a):
                raise ValueError(f"amplitude for harmonic {k} must be finite and >= 0")

    def amplitude_of(self, k: int) -> float:
        for kk, a in self.amplitudes:
            if kk == k:
                return a
        return 1.0


@dataclass(frozen=True)
class AlternatingMixtureSpec:
    """Two harmonic tones taking turns: tone_a occupies even half-periods
    (starting at t = 0), tone_b the odd ones. Each burst carries
    raised-cosine on/off ramps inside its half-period, so the two
    activity gates never overlap.

    The tones' own duration_s fields are ignored; duration_s here sets
    the mixture length.
    """

    tone_a: HarmonicToneSpec
    tone_b: HarmonicToneSpec
    tone_period_s: float = 0.062
    duration_s: float = 3.0
    ramp_s: float = DEFAULT_RAMP_S

    def __post_init__(self):
        if self.tone_period_s <= 0:
            raise ValueError("tone_period_s must be positive")
        if self.tone_period_s / 2 < 2 * self.ramp_s:
            raise ValueError(
                f"half period {self.tone_period_s / 2:.4f}s too short for two "
                f"{self.ramp_s:.4f}s ramps"
            )
        if self.duration_s < self.tone_period_s:
            raise ValueError("duration_s must cover at least one tone period")


@dataclass(frozen=True)
class MuteEvent:
    """Zero a stream on [start_s, start_s + duration_s)."""

    target: str
    start_s: float
    duration_s: float

    def __post_init__(self):
        if self.target not in MUTE_TARGETS:
            raise ValueError(f"target must be one of {MUTE_TARGETS}, got {self.target!r}")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.start_s < 0:
            raise ValueError("start_s must be >= 0")


@dataclass(frozen=True)
class SpeechMixSpec:
    """Mix two mono files at a relative gain (dB applied to file b)."""

    path_a: str
    path_b: str
    gain_db_b: float = 0.0


def synth_tone(spec: HarmonicToneSpec, sample_rate_hz: int, normalize: bool = False) -> Waveform:
    """Render a harmonic tone: x(t) = sum_k a_k sin(2 pi k f0 t).

    Args:
        spec: tone description.
        sample_rate_hz: output rate; every harmonic must sit below Nyquist.
        normalize: if True, scale the result to peak 0.9.

    Raises:
        ValueError: if any harmonic aliases (k * f0 >= sample_rate / 2).
    """
    top = max(spec.harmonics) * spec.f0_hz
    if top >= sample_rate_hz / 2:
        raise ValueError(
            f"harmonic {max(spec.harmonics)} of f0 {spec.f0_hz} Hz is at {top} Hz, "
            f"at or above Nyquist ({sample_rate_hz / 2} Hz)"
        )
    n = int(round(spec.duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    x = np.zeros(n)
    for k in spec.harmonics:
        x += spec.amplitude_of(k) * np.sin(2 * np.pi * k * spec.f0_hz * t)
    if normalize:
        peak = np.max(np.abs(x))
        if peak > 0:
            x *= NORMALIZE_PEAK / peak
    return Waveform(x, sample_rate_hz)


def _raised_cosine(u: np.ndarray) -> np.ndarray:
    """0 -> 1 transition for u in [0, 1], clamped outside."""
    u = np.clip(u, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * u)


def _alternating_gate(t: np.ndarray, half_s: float, duration_s: float, ramp_s: float,
                      parity: int) -> np.ndarray:
    """Gate that is nonzero only inside half-periods of the given parity,
    with raised-cosine edges contained in each half-period."""
    idx = np.floor(t / half_s).astype(np.int64)
    seg_start = idx * half_s
    seg_end = np.minimum(seg_start + half_s, duration_s)
    u = np.minimum((t - seg_start) / ramp_s, (seg_end - t) / ramp_s)
    gate = _raised_cosine(u)
    gate[idx % 2 != parity] = 0.0
    return gate


def synth_alternating_mixture(
    spec: AlternatingMixtureSpec, sample_rate_hz: int
) -> tuple[Waveform, list[Waveform], np.ndarray]:
    """Render an alternating two-tone mixture.

    Returns:
        (mixture, [source_a, source_b], activity) where activity[n] is 0
        while tone_a's half-period is in effect and 1 while tone_b's is.
        The mixture is the exact sample-wise sum of the two sources.
    """
    n = int(round(spec.duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    half = spec.tone_period_s / 2

    raw_a = synth_tone(
        HarmonicToneSpec(
            f0_hz=spec.tone_a.f0_hz,
            harmonics=spec.tone_a.harmonics,
            duration_s=spec.duration_s,
            amplitudes=spec.tone_a.amplitudes,
        ),
        sample_rate_hz,
    ).samples[:n]
    raw_b = synth_tone(
        HarmonicToneSpec(
            f0_hz=spec.tone_b.f0_hz,
            harmonics=spec.tone_b.harmonics,
            duration_s=spec.duration_s,
            amplitudes=spec.tone_b.amplitudes,
        ),
        sample_rate_hz,
    ).samples[:n]

    gate_a = _alternating_gate(t, half, spec.duration_s, spec.ramp_s, parity=0)
    gate_b = _alternating_gate(t, half, spec.duration_s, spec.ramp_s, parity=1)
    src_a = raw_a * gate_a
    src_b = raw_b * gate_b
    activity = (np.floor(t / half).astype(np.int64) % 2).astype(np.uint8)

    sources = [Waveform(src_a, sample_rate_hz), Waveform(src_b, sample_rate_hz)]
    mixture = Waveform(src_a + src_b, sample_rate_hz)
    return mixture, sources, activity


def _mute_envelope(n: int, sample_rate_hz: int, event: MuteEvent, ramp_s: float) -> np.ndarray:
    start = int(round(event.start_s * sample_rate_hz))
    count = int(round(event.duration_s * sample_rate_hz))
    end = start + count
    if end > n:
        raise ValueError(
            f"mute [{event.start_s}, {event.start_s + event.duration_s})s runs past "
            f"the end of a {n / sample_rate_hz:.3f}s signal"
        )
    ramp = int(round(ramp_s * sample_rate_hz))
    env = np.ones(n)
    env[start:end] = 0.0
    lo = max(0, start - ramp)
    if start > lo:
        u = (start - np.arange(lo, start)) / ramp
        env[lo:start] = _raised_cosine(u)
    hi = min(n, end + ramp)
    if hi > end:
        u = (np.arange(end, hi) - end + 1) / ramp
        env[end:hi] = _raised_cosine(u)
    return env


def apply_mute(
    mixture: Waveform,
    sources: Sequence[Waveform],
    event: MuteEvent,
    ramp_s: float = DEFAULT_RAMP_S,
) -> tuple[Waveform, list[Waveform]]:
    """Zero one stream over [start_s, start_s + duration_s).

    The interval itself is zeroed exactly; raised-cosine ramps of ramp_s
    taper the neighboring samples on both sides. Muting a source
    recomputes the mixture as the sum of the updated sources. Muting a
    stream that is already silent on the interval is a no-op, which
    makes repeated application of the same event idempotent.

    Args:
        mixture: current mixture.
        sources: current sources, summing to the mixture.
        event: what to mute, where, and for how long.
        ramp_s: edge ramp length in seconds.

    Returns:
        (mixture, sources) with the mute applied.
    """
    n = len(mixture)
    sr = mixture.sample_rate_hz
    if event.target == MUTE_MIXTURE:
        streams = {"target": mixture.samples}
    elif event.target == MUTE_SOURCE_A:
        streams = {"target": sources[0].samples}
    else:
        if len(sources) < 2:
            raise ValueError("mute target source_b requires two sources")
        streams = {"target": sources[1].samples}

    start = int(round(event.start_s * sr))
    count = int(round(event.duration_s * sr))
    target = streams["target"]
    if start + count <= n and not np.any(target[start:start + count]):
        return mixture, list(sources)

    env = _mute_envelope(n, sr, event, ramp_s)
    if event.target == MUTE_MIXTURE:
        return Waveform(mixture.samples * env, sr), list(sources)

    new_sources = [s.samples.copy() for s in sources]
    idx = 0 if event.target == MUTE_SOURCE_A else 1
    new_sources[idx] = new_sources[idx] * env
    out_sources = [Waveform(s, sr) for s in new_sources]
    new_mix = np.sum([s.samples for s in out_sources], axis=0)
    return Waveform(new_mix, sr), out_sources


def mix_speech(spec: SpeechMixSpec) -> tuple[Waveform, list[Waveform]]:
    """Mix two mono files, truncating to the shorter one.

    File b is scaled by gain_db_b before summing. If the mixture peak
    exceeds 1.0, mixture and both sources are rescaled by the same
    factor, which leaves any scale-invariant score unchanged.

    Raises:
        ValueError: on sample-rate mismatch or empty overlap.
    """
    a = read_wav(spec.path_a)
    b = read_wav(spec.path_b)
    if a.sample_rate_hz != b.sample_rate_hz:
        raise ValueError(
            f"sample-rate mismatch: {spec.path_a} is {a.sample_rate_hz} Hz, "
            f"{spec.path_b} is {b.sample_rate_hz} Hz"
        )
    n = min(len(a), len(b))
    if n == 0:
        raise ValueError("files have no overlapping samples")
    gain = 10.0 ** (spec.gain_db_b / 20.0)
    sa = a.samples[:n]
    sb = b.samples[:n] * gain
    mix = sa + sb
    peak = np.max(np.abs(mix))
    if peak > 1.0:
        scale = 1.0 / peak
        sa, sb, mix = sa * scale, sb * scale, mix * scale
    sr = a.sample_rate_hz
    return Waveform(mix, sr), [Waveform(sa, sr), Waveform(sb, sr)]
