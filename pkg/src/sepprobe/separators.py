"""Separator backends: mask-based oracles computed from the true
sources, a trivial identity split, and a subprocess bridge to external
separator executables.

External separators are invoked as
    <command> --input {input} --outdir {outdir} --num-speakers C
and must write est1.wav .. estC.wav (mono, PCM16 or float32, at the
mixture sample rate) into the output directory.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sepprobe.core import (
    ComplexSpectrogram,
    StftConfig,
    Waveform,
    istft,
    read_wav,
    stft,
    write_wav,
)
from sepprobe.metrics import SeparationResult

SEPARATOR_KINDS = ("irm_oracle", "ibm_oracle", "identity_split", "external")
MASK_EPS = 1e-12
SOURCE_SUM_TOL = 1e-3
# 8 ms window at the canonical 8 kHz rate: short bursts need time
# resolution much finer than the burst length or the masks smear
# across source transitions
ORACLE_STFT = StftConfig(window_len=64, hop=32, fft_len=64)
# length slack for external estimates, one default analysis window
LENGTH_TOL_SAMPLES = 256
DEFAULT_TIMEOUT_S = 120.0


class SeparatorError(RuntimeError):
    """Raised when a separator run fails (bad output, crash, timeout)."""


@dataclass(frozen=True)
class SeparatorDescriptor:
    """How to run one separator.

    Oracle kinds use the stft config; kind "external" requires a
    command_template containing {input} and {outdir} placeholders (an
    optional {num_speakers} is substituted too).
    """

    kind: str
    separator_id: str = ""
    stft: StftConfig = ORACLE_STFT
    command_template: str = ""
    timeout_s: float = DEFAULT_TIMEOUT_S
    num_speakers: int = 2

    def __post_init__(self):
        if self.kind not in SEPARATOR_KINDS:
            raise ValueError(f"kind must be one of {SEPARATOR_KINDS}, got {self.kind!r}")
        if self.kind == "external":
            if not self.command_template:
                raise ValueError("external separator requires command_template")
            for placeholder in ("{input}", "{outdir}"):
                if placeholder not in self.command_template:
                    raise ValueError(f"command_template is missing {placeholder}")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.num_speakers < 2:
            raise ValueError("num_speakers must be at least 2")
        if not self.separator_id:
            object.__setattr__(self, "separator_id", self.kind)


def _check_oracle_inputs(mixture: Waveform, sources: list[Waveform]) -> None:
    if len(sources) < 2:
        raise ValueError("oracle separation needs at least 2 true sources")
    for s in sources:
        if s.sample_rate_hz != mixture.sample_rate_hz:
            raise ValueError("source and mixture sample rates differ")
        if len(s) != len(mixture):
            raise ValueError("source and mixture lengths differ")
    mix_norm = float(np.linalg.norm(mixture.samples))
    if mix_norm == 0.0:
        raise ValueError("mixture is identically zero")
    residual = np.linalg.norm(mixture.samples - np.sum([s.samples for s in sources], axis=0))
    if residual / mix_norm > SOURCE_SUM_TOL:
        raise ValueError(
            f"sources do not sum to the mixture (relative residual "
            f"{residual / mix_norm:.2e} > {SOURCE_SUM_TOL})"
        )


def _mask_separate(
    mixture: Waveform,
    true_sources: list[Waveform],
    config: StftConfig,
    binary: bool,
    separator_id: str,
) -> SeparationResult:
    _check_oracle_inputs(mixture, true_sources)
    mix_spec = stft(mixture, config)
    mags = np.stack([np.abs(stft(s, config).frames) for s in true_sources])
    if binary:
        # winner takes the bin; argmax resolves ties to the lowest index
        winner = np.argmax(mags, axis=0)
        masks = np.stack([(winner == i).astype(float) for i in range(len(true_sources))])
    else:
        masks = mags / (np.sum(mags, axis=0) + MASK_EPS)
    estimates = []
    for mask in masks:
        masked = ComplexSpectrogram(
            frames=mix_spec.frames * mask,
            config=config,
            sample_rate_hz=mix_spec.sample_rate_hz,
            n_samples=mix_spec.n_samples,
        )
        estimates.append(istft(masked))
    return SeparationResult(tuple(estimates), separator_id)


def separate_irm(
    mixture: Waveform,
    true_sources: list[Waveform],
    config: StftConfig = ORACLE_STFT,
) -> SeparationResult:
    """Ideal-ratio-mask oracle: mask_i = |S_i| / (sum_j |S_j| + eps).

    Masks sum to one (up to eps), so the estimates reconstruct the
    mixture within istft tolerance. Channel order follows the source
    order.

    Raises:
        ValueError: if the sources do not sum to the mixture within
            a relative residual of 1e-3.
    """
    return _mask_separate(mixture, true_sources, config, binary=False,
                          separator_id="irm_oracle")


def separate_ibm(
    mixture: Waveform,
    true_sources: list[Waveform],
    config: StftConfig = ORACLE_STFT,
) -> SeparationResult:
    """Ideal-binary-mask oracle: each bin goes to the loudest source,
    ties to the lowest channel index."""
    return _mask_separate(mixture, true_sources, config, binary=True,
                          separator_id="ibm_oracle")


def separate_identity(mixture: Waveform, num_channels: int = 2) -> SeparationResult:
    """Baseline that performs no separation: every channel is the
    mixture scaled by 1/C."""
    if num_channels < 2:
        raise ValueError("num_channels must be at least 2")
    per = Waveform(mixture.samples / num_channels, mixture.sample_rate_hz)
    return SeparationResult(tuple([per] * num_channels), "identity_split")


def _fit_length(est: Waveform, n_target: int, name: str) -> Waveform:
    diff = len(est) - n_target
    if diff == 0:
        return est
    if abs(diff) > LENGTH_TOL_SAMPLES:
        raise SeparatorError(
            f"{name} is {len(est)} samples, expected {n_target} "
            f"(tolerance {LENGTH_TOL_SAMPLES})"
        )
    if diff > 0:
        return Waveform(est.samples[:n_target], est.sample_rate_hz)
    padded = np.zeros(n_target)
    padded[: len(est)] = est.samples
    return Waveform(padded, est.sample_rate_hz)


def separate_external(
    descriptor: SeparatorDescriptor,
    mixture: Waveform,
    work_root: str | Path | None = None,
) -> SeparationResult:
    """Run an external separator executable on a mixture.

    The mixture is written to a private temporary directory, the
    command template is expanded token-by-token, and est1..estC.wav are
    collected from the output directory. The temporary directory is
    removed whether the run succeeds or fails.

    Args:
        descriptor: external-kind descriptor with the command template.
        mixture: input mixture.
        work_root: optional parent for the temporary directory.

    Raises:
        SeparatorError: on nonzero exit, timeout, missing or surplus
            estimate files, sample-rate mismatch, or length mismatch
            beyond tolerance.
    """
    if descriptor.kind != "external":
        raise ValueError(f"descriptor kind is {descriptor.kind!r}, not 'external'")
    c = descriptor.num_speakers
    with tempfile.TemporaryDirectory(prefix="sepprobe_ext_", dir=work_root) as tmp:
        tmp_path = Path(tmp)
        input_path = tmp_path / "input.wav"
        outdir = tmp_path / "out"
        outdir.mkdir()
        write_wav(mixture, input_path, encoding="float32")

        try:
            tokens = [
                tok.format(input=str(input_path), outdir=str(outdir), num_speakers=c)
                for tok in shlex.split(descriptor.command_template)
            ]
        except (KeyError, IndexError) as exc:
            raise SeparatorError(
                f"bad placeholder in command template: {descriptor.command_template!r}"
            ) from exc

        try:
            proc = subprocess.run(
                tokens,
                capture_output=True,
                text=True,
                timeout=descriptor.timeout_s,
            )
        except subprocess.TimeoutExpired as exc:
            raise SeparatorError(
                f"separator {descriptor.separator_id!r} timed out after "
                f"{descriptor.timeout_s}s"
            ) from exc
        except OSError as exc:
            raise SeparatorError(f"could not launch {tokens[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            stderr_tail = proc.stderr.strip().splitlines()[-5:]
            raise SeparatorError(
                f"separator {descriptor.separator_id!r} exited with status "
                f"{proc.returncode}: {' | '.join(stderr_tail) or '<no stderr>'}"
            )

        produced = sorted(outdir.glob("est*.wav"))
        expected = [outdir / f"est{i}.wav" for i in range(1, c + 1)]
        if produced != expected:
            raise SeparatorError(
                f"expected {c} estimate files est1.wav..est{c}.wav, found "
                f"{[p.name for p in produced]}"
            )
        estimates = []
        for path in expected:
            est = read_wav(path)
            if est.sample_rate_hz != mixture.sample_rate_hz:
                raise SeparatorError(
                    f"{path.name} is at {est.sample_rate_hz} Hz, mixture is at "
                    f"{mixture.sample_rate_hz} Hz"
                )
            estimates.append(_fit_length(est, len(mixture), path.name))
    return SeparationResult(tuple(estimates), descriptor.separator_id)


def run_separator(
    descriptor: SeparatorDescriptor,
    mixture: Waveform,
    true_sources: list[Waveform] | None = None,
) -> SeparationResult:
    """Dispatch to the backend named by the descriptor kind. Oracle
    kinds require the true sources."""
    if descriptor.kind in ("irm_oracle", "ibm_oracle"):
        if true_sources is None:
            raise ValueError(f"{descriptor.kind} requires true sources")
        fn = separate_irm if descriptor.kind == "irm_oracle" else separate_ibm
        result = fn(mixture, true_sources, descriptor.stft)
    elif descriptor.kind == "identity_split":
        result = separate_identity(mixture, descriptor.num_speakers)
    else:
        result = separate_external(descriptor, mixture)
    if descriptor.separator_id != result.separator_id:
        result = SeparationResult(result.estimates, descriptor.separator_id)
    return result
