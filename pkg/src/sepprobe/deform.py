"""Spectral deformations: zero-phase lowpass, highpass, and band-stop
filters realized as raised-cosine gain masks on the full-signal FFT.

Masking the FFT directly gives exactly reproducible, zero-delay output
of the same length as the input. Complementary lowpass/highpass edges
use mirrored transitions, so lp(x) + hp(x) == x up to FFT round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sepprobe.core import Waveform

FILTER_KINDS = ("lowpass", "highpass", "bandstop")
DEFAULT_TRANSITION_HZ = 20.0

LOWPASS_SWEEP_HZ = (300.0, 700.0, 1200.0)
HIGHPASS_SWEEP_HZ = (180.0, 300.0, 400.0, 700.0)
BANDSTOP_SUITE_HZ = (
    (200.0, 800.0),
    (200.0, 700.0),
    (250.0, 700.0),
    (250.0, 650.0),
    (300.0, 650.0),
    (300.0, 600.0),
    (350.0, 600.0),
    (350.0, 400.0),
)


@dataclass(frozen=True)
class FilterSpec:
    """One spectral deformation.

    kind "lowpass" uses f_hi_hz as its cutoff, "highpass" uses f_lo_hz,
    and "bandstop" removes [f_lo_hz, f_hi_hz]. Each edge is a raised
    cosine of width transition_hz centered on the cutoff.
    """

    kind: str
    f_lo_hz: float | None = None
    f_hi_hz: float | None = None
    transition_hz: float = DEFAULT_TRANSITION_HZ

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"kind must be one of {FILTER_KINDS}, got {self.kind!r}")
        if self.transition_hz <= 0:
            raise ValueError("transition_hz must be positive")
        if self.kind == "lowpass" and self.f_hi_hz is None:
            raise ValueError("lowpass requires f_hi_hz")
        if self.kind == "highpass" and self.f_lo_hz is None:
            raise ValueError("highpass requires f_lo_hz")
        if self.kind == "bandstop":
            if self.f_lo_hz is None or self.f_hi_hz is None:
                raise ValueError("bandstop requires f_lo_hz and f_hi_hz")
            if self.f_lo_hz >= self.f_hi_hz:
                raise ValueError(
                    f"bandstop needs f_lo_hz < f_hi_hz, got {self.f_lo_hz} >= {self.f_hi_hz}"
                )

    def label(self) -> str:
        if self.kind == "lowpass":
            return f"lp_{self.f_hi_hz:g}"
        if self.kind == "highpass":
            return f"hp_{self.f_lo_hz:g}"
        return f"bs_{self.f_lo_hz:g}_{self.f_hi_hz:g}"


def _falling_edge(freqs: np.ndarray, cutoff: float, width: float) -> np.ndarray:
    """Gain 1 below the transition band, 0 above, raised cosine inside."""
    u = np.clip((freqs - (cutoff - width / 2)) / width, 0.0, 1.0)
    return 0.5 + 0.5 * np.cos(np.pi * u)


def _gain_curve(spec: FilterSpec, freqs: np.ndarray) -> np.ndarray:
    if spec.kind == "lowpass":
        return _falling_edge(freqs, spec.f_hi_hz, spec.transition_hz)
    if spec.kind == "highpass":
        return 1.0 - _falling_edge(freqs, spec.f_lo_hz, spec.transition_hz)
    low_side = _falling_edge(freqs, spec.f_lo_hz, spec.transition_hz)
    high_side = 1.0 - _falling_edge(freqs, spec.f_hi_hz, spec.transition_hz)
    return low_side + high_side


def _check_edges(spec: FilterSpec, nyquist: float) -> None:
    half = spec.transition_hz / 2
    for cutoff in (spec.f_lo_hz, spec.f_hi_hz):
        if cutoff is None:
            continue
        if cutoff >= nyquist:
            raise ValueError(f"cutoff {cutoff} Hz at or above Nyquist ({nyquist} Hz)")
        if cutoff - half <= 0:
            raise ValueError(
                f"transition band around {cutoff} Hz crosses DC; narrow transition_hz"
            )
        if cutoff + half >= nyquist:
            raise ValueError(
                f"transition band around {cutoff} Hz crosses Nyquist ({nyquist} Hz)"
            )


def apply_filter(waveform: Waveform, spec: FilterSpec) -> Waveform:
    """Filter a signal with a zero-phase FFT gain mask.

    Output has the same length as the input and zero group delay: a
    passband sine comes back with unchanged phase.

    Raises:
        ValueError: if a cutoff or its transition band leaves (0, Nyquist).
    """
    nyquist = waveform.sample_rate_hz / 2
    _check_edges(spec, nyquist)
    x = waveform.samples
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1.0 / waveform.sample_rate_hz)
    out = np.fft.irfft(spectrum * _gain_curve(spec, freqs), n=x.size)
    return Waveform(out, waveform.sample_rate_hz)


def preset_filters(name: str) -> list[FilterSpec]:
    """Named deformation banks.

    "lp_sweep": lowpass at 300 / 700 / 1200 Hz.
    "hp_sweep": highpass at 180 / 300 / 400 / 700 Hz.
    "bandstop_suite": eight stop bands narrowing from 200-800 Hz down
        to 350-400 Hz.
    """
    if name == "lp_sweep":
        return [FilterSpec("lowpass", f_hi_hz=c) for c in LOWPASS_SWEEP_HZ]
    if name == "hp_sweep":
        return [FilterSpec("highpass", f_lo_hz=c) for c in HIGHPASS_SWEEP_HZ]
    if name == "bandstop_suite":
        return [FilterSpec("bandstop", f_lo_hz=lo, f_hi_hz=hi) for lo, hi in BANDSTOP_SUITE_HZ]
    raise ValueError(
        f"unknown preset {name!r}; expected lp_sweep, hp_sweep, or bandstop_suite"
    )
