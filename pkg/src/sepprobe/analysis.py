"""F0 tracking and channel-assignment statistics.

The F0 estimator is a frame-based normalized autocorrelation picker
with parabolic peak refinement. Assignment statistics summarize which
output channel a separator gives to the lower-pitched source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from sepprobe.core import Waveform
from sepprobe.metrics import SeparationResult

F0_SILENCE_GATE_DBFS = -45.0
F0_CLARITY_MIN = 0.5
# refined peaks within this NAC distance of the best compete; the
# smallest lag wins, which keeps exact period multiples from stealing
# the peak on strongly periodic input
OCTAVE_TOL = 0.01
# sub-sample corrections below this are window asymmetry noise, not
# pitch; snapping keeps integer-period tones at exact frequencies
SNAP_LAG = 0.01

HIST_RANGE = (-2.0, 2.0)
HIST_BIN_WIDTH = 0.1


@dataclass(frozen=True)
class F0Track:
    """Frame-level F0 estimates.

    f0_hz holds one value per frame, NaN where the frame is unvoiced
    (below the level gate or lacking a clear periodicity peak).
    """

    f0_hz: np.ndarray
    clarity: np.ndarray
    frame_ms: float
    hop_ms: float

    @property
    def voiced(self) -> np.ndarray:
        return ~np.isnan(self.f0_hz)

    @property
    def mean_f0_hz(self) -> float | None:
        if not np.any(self.voiced):
            return None
        return float(np.mean(self.f0_hz[self.voiced]))


@dataclass(frozen=True)
class AssignmentStats:
    """Which channel got the lower-F0 source, over a batch of results.

    log2_ratios holds log2(mean_f0(ch2) / mean_f0(ch1)) per mixture; a
    positive value means channel 1 carries the lower F0. The histogram
    is density-normalized over [-2, 2] with 0.1-wide bins (ratios
    outside the range are clamped to the edge bins).
    """

    log2_ratios: tuple[float, ...]
    frac_low_to_ch1: float
    histogram_density: np.ndarray
    histogram_edges: np.ndarray
    n_included: int
    n_excluded: int


def _nac_matrix(frames: np.ndarray, lag_lo: int, lag_hi: int) -> np.ndarray:
    """Normalized autocorrelation for each frame at lags lag_lo..lag_hi."""
    n_frames, width = frames.shape
    out = np.zeros((n_frames, lag_hi - lag_lo + 1))
    for idx, lag in enumerate(range(lag_lo, lag_hi + 1)):
        a = frames[:, : width - lag]
        b = frames[:, lag:]
        num = np.einsum("ij,ij->i", a, b)
        den = np.sqrt(np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b))
        live = den > 0
        out[live, idx] = num[live] / den[live]
    return out


def estimate_f0(
    waveform: Waveform,
    frame_ms: float = 40.0,
    hop_ms: float = 10.0,
    search_hz: tuple[float, float] = (60.0, 400.0),
) -> F0Track:
    """Track F0 with framewise normalized autocorrelation.

    A frame is unvoiced when its RMS is under -45 dBFS or its best
    normalized-autocorrelation peak is under 0.5. The integer-lag peak
    is refined by parabolic interpolation; when several lags tie within
    a small tolerance the shortest one is used.

    Args:
        waveform: signal to analyze.
        frame_ms: analysis frame length.
        hop_ms: frame advance.
        search_hz: (low, high) F0 search range.

    Raises:
        ValueError: if the search range reaches Nyquist or the frame is
            too short to cover the longest search lag.
    """
    f_lo, f_hi = search_hz
    sr = waveform.sample_rate_hz
    if not 0 < f_lo < f_hi:
        raise ValueError(f"invalid search range {search_hz}")
    if f_hi >= sr / 2:
        raise ValueError(f"search range {search_hz} exceeds Nyquist ({sr / 2} Hz)")
    lag_lo = max(2, int(math.floor(sr / f_hi)))
    lag_hi = int(math.ceil(sr / f_lo))
    frame_len = int(round(frame_ms / 1000.0 * sr))
    hop = int(round(hop_ms / 1000.0 * sr))
    if frame_len <= lag_hi + 2:
        raise ValueError(
            f"frame of {frame_len} samples cannot cover search lag {lag_hi}; "
            f"increase frame_ms or raise the low end of search_hz"
        )

    x = waveform.samples
    n_frames = 1 + (x.size - frame_len) // hop if x.size >= frame_len else 0
    f0 = np.full(n_frames, np.nan)
    clarity = np.zeros(n_frames)
    if n_frames == 0:
        return F0Track(f0, clarity, frame_ms, hop_ms)

    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx]
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    gate = 10.0 ** (F0_SILENCE_GATE_DBFS / 20.0)

    # one extra lag on each side for local-maximum and parabolic fits
    ext_lo = max(1, lag_lo - 1)
    nac = _nac_matrix(frames, ext_lo, lag_hi + 1)

    for f in range(n_frames):
        if rms[f] < gate:
            continue
        row = nac[f]
        inner = row[1:-1]
        is_peak = (inner >= row[:-2]) & (inner >= row[2:])
        peak_pos = np.flatnonzero(is_peak) + 1
        lags = peak_pos + ext_lo
        in_range = (lags >= lag_lo) & (lags <= lag_hi)
        peak_pos, lags = peak_pos[in_range], lags[in_range]
        if peak_pos.size == 0:
            continue
        clarity[f] = float(np.max(row[peak_pos]))
        if clarity[f] < F0_CLARITY_MIN:
            continue

        refined: list[tuple[float, float]] = []
        for pos, lag in zip(peak_pos, lags):
            r_prev, r_mid, r_next = row[pos - 1], row[pos], row[pos + 1]
            denom = r_prev - 2.0 * r_mid + r_next
            delta = 0.0 if denom == 0 else 0.5 * (r_prev - r_next) / denom
            if abs(delta) < SNAP_LAG:
                delta = 0.0
            delta = float(np.clip(delta, -0.5, 0.5))
            value = r_mid - 0.25 * (r_prev - r_next) * delta
            refined.append((lag + delta, value))
        best_value = max(value for _, value in refined)
        chosen = min(lag for lag, value in refined if value >= best_value - OCTAVE_TOL)
        f0[f] = sr / chosen
    return F0Track(f0, clarity, frame_ms, hop_ms)


def assignment_stats(
    results: Sequence[SeparationResult],
    frame_ms: float = 40.0,
    hop_ms: float = 10.0,
    search_hz: tuple[float, float] = (60.0, 400.0),
) -> AssignmentStats:
    """Summarize channel ordering by F0 across two-channel results.

    For each result the per-channel mean F0 is estimated and the ratio
    log2(mean_f0(ch2) / mean_f0(ch1)) recorded; ratios above zero mean
    the lower-pitched source landed in channel 1. Results where either
    channel has no voiced frame are excluded and counted.

    Raises:
        ValueError: on an empty input list or a non-two-channel result.
    """
    if len(results) == 0:
        raise ValueError("assignment_stats needs at least one result")
    ratios: list[float] = []
    excluded = 0
    for result in results:
        ratio = log2_f0_ratio(result, frame_ms=frame_ms, hop_ms=hop_ms, search_hz=search_hz)
        if ratio is None:
            excluded += 1
        else:
            ratios.append(ratio)
    return stats_from_ratios(ratios, excluded)


def log2_f0_ratio(
    result: SeparationResult,
    frame_ms: float = 40.0,
    hop_ms: float = 10.0,
    search_hz: tuple[float, float] = (60.0, 400.0),
) -> float | None:
    """log2 of mean-F0(channel 2) over mean-F0(channel 1) for one
    two-channel result, or None when either channel is unvoiced."""
    if result.n_channels != 2:
        raise ValueError(
            f"assignment stats are defined for 2 channels, got {result.n_channels}"
        )
    means = []
    for est in result.estimates:
        track = estimate_f0(est, frame_ms=frame_ms, hop_ms=hop_ms, search_hz=search_hz)
        means.append(track.mean_f0_hz)
    if means[0] is None or means[1] is None:
        return None
    return math.log2(means[1] / means[0])


def stats_from_ratios(ratios: Sequence[float], n_excluded: int) -> AssignmentStats:
    """Build AssignmentStats from already-extracted log2 ratios."""
    ratios = list(ratios)
    lo, hi = HIST_RANGE
    edges = np.linspace(lo, hi, int(round((hi - lo) / HIST_BIN_WIDTH)) + 1)
    if ratios:
        clamped = np.clip(ratios, lo, hi)
        density, _ = np.histogram(clamped, bins=edges, density=True)
    else:
        density = np.zeros(len(edges) - 1)
    frac = float(np.mean([r > 0 for r in ratios])) if ratios else 0.0
    return AssignmentStats(
        log2_ratios=tuple(ratios),
        frac_low_to_ch1=frac,
        histogram_density=density,
        histogram_edges=edges,
        n_included=len(ratios),
        n_excluded=n_excluded,
    )
