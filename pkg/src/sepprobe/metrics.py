"""Separation quality metrics: SI-SDR, SNR, permutation-invariant
evaluation, framewise scores, and channel-swap detection.

SI-SDR projects the estimate onto the reference, so any rescaling of
either signal cancels. Values are capped at +80 dB once the error
energy falls below 1e-16 of the projected target energy; a zero or
orthogonal estimate floors at -80 dB.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sepprobe.core import Waveform

SI_SDR_CAP_DB = 80.0
CAP_ERROR_RATIO = 1e-16
SILENCE_GATE_DBFS = -60.0
SWAP_MARGIN_DB = 3.0


@dataclass(frozen=True)
class SeparationResult:
    """Output channels of one separator run on one mixture."""

    estimates: tuple[Waveform, ...]
    separator_id: str
    stimulus_id: str = ""
    deformation_id: str = ""

    def __post_init__(self):
        estimates = tuple(self.estimates)
        if len(estimates) < 2:
            raise ValueError(f"need at least 2 estimates, got {len(estimates)}")
        n = len(estimates[0])
        rate = estimates[0].sample_rate_hz
        for est in estimates[1:]:
            if len(est) != n or est.sample_rate_hz != rate:
                raise ValueError("estimates must share length and sample rate")
        object.__setattr__(self, "estimates", estimates)

    @property
    def n_channels(self) -> int:
        return len(self.estimates)


@dataclass(frozen=True)
class SwapEvent:
    """A maximal run of frames scored better under a non-global
    permutation by more than the detection margin."""

    start_frame: int
    duration_frames: int
    permutation: tuple[int, ...]


@dataclass(frozen=True)
class EvalRow:
    """Evaluation of one (stimulus, deformation, separator) cell.

    chosen_permutation maps estimate index to reference index;
    si_sdr_per_channel[i] scores estimate i against its assigned
    reference. framewise_si_sdr is [channel, frame] with NaN marking
    frames whose reference is below the silence gate.
    """

    stimulus_id: str
    deformation_id: str
    separator_id: str
    chosen_permutation: tuple[int, ...]
    si_sdr_per_channel: tuple[float, ...]
    mean_si_sdr: float
    framewise_si_sdr: np.ndarray | None = None
    swap_events: tuple[SwapEvent, ...] = ()


def _as_samples(x: Waveform | np.ndarray) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def _si_sdr_samples(est: np.ndarray, ref: np.ndarray) -> float:
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ValueError("reference signal is identically zero")
    scale = float(np.dot(est, ref)) / ref_energy
    target = scale * ref
    target_energy = float(np.dot(target, target))
    err = est - target
    err_energy = float(np.dot(err, err))
    if err_energy < CAP_ERROR_RATIO * target_energy:
        return SI_SDR_CAP_DB
    if target_energy == 0.0:
        return -SI_SDR_CAP_DB
    return 10.0 * math.log10(target_energy / err_energy)


def _check_pair(est: Waveform, ref: Waveform) -> None:
    if len(est) != len(ref):
        raise ValueError(f"length mismatch: estimate {len(est)}, reference {len(ref)}")
    if est.sample_rate_hz != ref.sample_rate_hz:
        raise ValueError(
            f"sample-rate mismatch: estimate {est.sample_rate_hz} Hz, "
            f"reference {ref.sample_rate_hz} Hz"
        )


def si_sdr(est: Waveform, ref: Waveform) -> float:
    """Scale-invariant signal-to-distortion ratio in dB.

    The reference is scaled to the least-squares projection of the
    estimate before computing the energy ratio, so si_sdr(a*est, ref)
    equals si_sdr(est, ref) for any a > 0.

    Raises:
        ValueError: on length or rate mismatch, or an all-zero reference.
    """
    _check_pair(est, ref)
    return _si_sdr_samples(est.samples, ref.samples)


def snr(est: Waveform, ref: Waveform) -> float:
    """Plain signal-to-noise ratio in dB, error = est - ref.

    Shares the +80 dB cap with si_sdr. Unlike si_sdr this is scale
    sensitive: est = 2 * ref scores 0 dB.
    """
    _check_pair(est, ref)
    ref_s, est_s = ref.samples, est.samples
    ref_energy = float(np.dot(ref_s, ref_s))
    if ref_energy == 0.0:
        raise ValueError("reference signal is identically zero")
    err = est_s - ref_s
    err_energy = float(np.dot(err, err))
    if err_energy < CAP_ERROR_RATIO * ref_energy:
        return SI_SDR_CAP_DB
    return 10.0 * math.log10(ref_energy / err_energy)


def _validate_result_refs(result: SeparationResult, references: Sequence[Waveform]) -> None:
    refs = list(references)
    if len(refs) != result.n_channels:
        raise ValueError(
            f"channel count mismatch: {result.n_channels} estimates, {len(refs)} references"
        )
    for ref in refs:
        _check_pair(result.estimates[0], ref)


def pit_eval(result: SeparationResult, references: Sequence[Waveform]) -> EvalRow:
    """Permutation-invariant evaluation over all C! channel assignments.

    Every permutation's mean SI-SDR is computed and the best one wins;
    exact ties go to the lexicographically smallest permutation.

    Returns:
        EvalRow with the chosen permutation and per-channel scores.
        framewise_si_sdr and swap_events are left empty; use
        framewise_si_sdr() and detect_swaps() to fill them.
    """
    _validate_result_refs(result, references)
    c = result.n_channels
    score = np.empty((c, c))
    for i, est in enumerate(result.estimates):
        for j, ref in enumerate(references):
            score[i, j] = _si_sdr_samples(est.samples, ref.samples)

    best_perm: tuple[int, ...] | None = None
    best_mean = -np.inf
    for perm in itertools.permutations(range(c)):
        mean = float(np.mean([score[i, perm[i]] for i in range(c)]))
        if mean > best_mean:
            best_mean = mean
            best_perm = perm

    per_channel = tuple(float(score[i, best_perm[i]]) for i in range(c))
    return EvalRow(
        stimulus_id=result.stimulus_id,
        deformation_id=result.deformation_id,
        separator_id=result.separator_id,
        chosen_permutation=best_perm,
        si_sdr_per_channel=per_channel,
        mean_si_sdr=best_mean,
    )


def _frame_grid(n: int, sr: int, frame_ms: float, hop_ms: float) -> tuple[int, int, int]:
    frame_len = int(round(frame_ms / 1000.0 * sr))
    hop = int(round(hop_ms / 1000.0 * sr))
    if frame_len < 1 or hop < 1:
        raise ValueError("frame_ms and hop_ms too small for this sample rate")
    n_frames = 1 + (n - frame_len) // hop if n >= frame_len else 0
    return frame_len, hop, n_frames


def _frame_silent(ref: np.ndarray, gate_dbfs: float) -> bool:
    rms = math.sqrt(float(np.mean(ref * ref)))
    return rms < 10.0 ** (gate_dbfs / 20.0)


def framewise_si_sdr(
    result: SeparationResult,
    references: Sequence[Waveform],
    frame_ms: float = 20.0,
    hop_ms: float = 10.0,
    silence_gate_dbfs: float = SILENCE_GATE_DBFS,
) -> np.ndarray:
    """Per-frame SI-SDR under the globally best permutation.

    Frames are full windows only; a trailing partial frame is dropped.
    Entries where the assigned reference frame is below the silence
    gate are NaN, never 0 dB.

    Args:
        frame_ms: frame length, at least 10 ms.
        hop_ms: frame advance.

    Returns:
        float array [channel, frame], channel in estimate order.
    """
    if frame_ms < 10.0:
        raise ValueError(f"frame_ms must be >= 10, got {frame_ms}")
    _validate_result_refs(result, references)
    perm = pit_eval(result, references).chosen_permutation
    sr = result.estimates[0].sample_rate_hz
    n = len(result.estimates[0])
    frame_len, hop, n_frames = _frame_grid(n, sr, frame_ms, hop_ms)

    out = np.full((result.n_channels, n_frames), np.nan)
    for i, est in enumerate(result.estimates):
        ref = references[perm[i]].samples
        est_s = est.samples
        for f in range(n_frames):
            lo = f * hop
            ref_frame = ref[lo:lo + frame_len]
            if _frame_silent(ref_frame, silence_gate_dbfs):
                continue
            out[i, f] = _si_sdr_samples(est_s[lo:lo + frame_len], ref_frame)
    return out


def detect_swaps(
    result: SeparationResult,
    references: Sequence[Waveform],
    frame_ms: float = 20.0,
    margin_db: float = SWAP_MARGIN_DB,
    silence_gate_dbfs: float = SILENCE_GATE_DBFS,
) -> list[SwapEvent]:
    """Find runs of frames assigned better under a non-global permutation.

    Works on non-overlapping frames. A frame is swap-flagged when some
    permutation beats the global one by more than margin_db on that
    frame (scored over channels whose reference frame is active). A
    frame where every reference is silent neither opens nor closes a
    run. Two channels only.

    Returns:
        SwapEvents as (start_frame, duration_frames, permutation),
        duration spanning first to last flagged frame.
    """
    if result.n_channels != 2:
        raise ValueError("swap detection is defined for exactly 2 channels")
    _validate_result_refs(result, references)
    global_perm = pit_eval(result, references).chosen_permutation
    sr = result.estimates[0].sample_rate_hz
    n = len(result.estimates[0])
    frame_len, hop, n_frames = _frame_grid(n, sr, frame_ms, frame_ms)
    ests = [e.samples for e in result.estimates]
    refs = [r.samples for r in references]
    perms = list(itertools.permutations(range(2)))

    # per frame: None = all references silent, else best non-global margin
    flagged: list[bool | None] = []
    swapped_to: list[tuple[int, ...] | None] = []
    for f in range(n_frames):
        lo = f * frame_len
        ref_frames = [r[lo:lo + frame_len] for r in refs]
        active = [j for j in range(2) if not _frame_silent(ref_frames[j], silence_gate_dbfs)]
        if not active:
            flagged.append(None)
            swapped_to.append(None)
            continue

        def perm_score(perm: tuple[int, ...]) -> float:
            vals = []
            for i in range(2):
                if perm[i] in active:
                    vals.append(_si_sdr_samples(ests[i][lo:lo + frame_len], ref_frames[perm[i]]))
            return float(np.mean(vals))

        global_score = perm_score(global_perm)
        best_other, best_other_perm = -np.inf, None
        for perm in perms:
            if perm == global_perm:
                continue
            s = perm_score(perm)
            if s > best_other:
                best_other, best_other_perm = s, perm
        is_swap = best_other - global_score > margin_db
        flagged.append(is_swap)
        swapped_to.append(best_other_perm if is_swap else None)

    events: list[SwapEvent] = []
    run_start: int | None = None
    run_last: int | None = None
    run_perm: tuple[int, ...] | None = None
    for f in range(n_frames):
        if flagged[f] is None:
            continue  # silent frame: leaves any open run untouched
        if flagged[f]:
            if run_start is None:
                run_start, run_perm = f, swapped_to[f]
            run_last = f
        else:
            if run_start is not None:
                events.append(SwapEvent(run_start, run_last - run_start + 1, run_perm))
                run_start = run_last = run_perm = None
    if run_start is not None:
        events.append(SwapEvent(run_start, run_last - run_start + 1, run_perm))
    return events
