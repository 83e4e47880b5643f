"""Batch experiment runner: expands a declarative JSON config into
stimulus x deformation x separator cells, executes them, and writes
deterministic CSV/JSON reports.

A config document looks like:

    {
      "seed": 0,
      "sample_rate_hz": 8000,
      "reference_mode": "auto",
      "metrics": {"frame_ms": 20.0, "swap_margin_db": 3.0},
      "stimuli": [
        {"type": "alternating_tones", "id": "alt62",
         "f0_a_hz": 117.0, "f0_b_hz": 201.0, "period_ms": 62.0}
      ],
      "deformations": [
        {"type": "none"},
        {"type": "filter", "kind": "lowpass", "cutoff_hz": 700.0},
        {"type": "mute_grid", "durations_ms": [31.0], "draws": 10}
      ],
      "separators": [{"kind": "irm_oracle"}]
    }

Reference mode "auto" scores filter deformations against the clean
sources and mute deformations against the deformed ones. A mute removes
signal the separator never saw, so clean references bound every
separator at the energy ratio of the cut; deformed references keep the
score about separation quality. "clean" and "deformed" force one mode
for every cell.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from sepprobe import __version__
from sepprobe.analysis import log2_f0_ratio, stats_from_ratios
from sepprobe.core import StftConfig, Waveform
from sepprobe.deform import FilterSpec, apply_filter, preset_filters
from sepprobe.metrics import EvalRow, SeparationResult, detect_swaps, pit_eval
from sepprobe.separators import (
    SEPARATOR_KINDS,
    SeparatorDescriptor,
    SeparatorError,
    run_separator,
)
from sepprobe.stimulus import (
    GRID_MUTE_MS,
    GRID_PERIODS_MS,
    GRID_SEEDS,
    MUTE_SOURCE_A,
    MUTE_SOURCE_B,
    AlternatingMixtureSpec,
    HarmonicToneSpec,
    MuteEvent,
    SpeechMixSpec,
    apply_mute,
    mix_speech,
    synth_alternating_mixture,
)

REFERENCE_MODES = ("auto", "clean", "deformed")
STIMULUS_TYPES = ("alternating_tones", "tone_grid", "speech_pair")
DEFORMATION_TYPES = ("none", "filter", "filter_preset", "mute", "mute_grid")
# keep random mutes away from the signal edges
MUTE_EDGE_MARGIN_S = 0.25


class ConfigError(ValueError):
    """Raised when an experiment config fails validation."""


@dataclass(frozen=True)
class MetricOptions:
    frame_ms: float = 20.0
    hop_ms: float = 10.0
    swap_margin_db: float = 3.0
    silence_gate_dbfs: float = -60.0
    f0_search_hz: tuple[float, float] = (60.0, 400.0)


@dataclass(frozen=True)
class PreparedStimulus:
    stimulus_id: str
    mixture: Waveform
    sources: tuple[Waveform, ...]
    # half-period of the alternation, None for stimuli without one
    half_period_s: float | None = None


@dataclass(frozen=True)
class PreparedDeformation:
    """One expanded deformation. kind is "none", "filter", or "mute";
    mutes with mute_start_s None are placed per cell by the seeded rng."""

    deformation_id: str
    kind: str
    filter_spec: FilterSpec | None = None
    mute_target: str | None = None
    mute_start_s: float | None = None
    mute_duration_s: float | None = None


@dataclass
class CellOutcome:
    stimulus_id: str
    deformation_id: str
    separator_id: str
    status: str
    detail: str = ""
    row: EvalRow | None = None
    log2_ratio: float | None = None
    ratio_excluded: bool = False
    error: str = ""

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.stimulus_id, self.deformation_id, self.separator_id)


@dataclass
class ReportBundle:
    resolved_config: dict
    outcomes: list[CellOutcome] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(1 for o in self.outcomes if o.status != "ok")

    def aggregate_rows(self) -> list[dict[str, Any]]:
        """Per (deformation, separator): counts, mean/median SI-SDR
        over scored rows, and swap-event tallies."""
        groups: dict[tuple[str, str], list[CellOutcome]] = {}
        for o in self.outcomes:
            groups.setdefault((o.deformation_id, o.separator_id), []).append(o)
        rows = []
        for (deformation_id, separator_id) in sorted(groups):
            cells = groups[(deformation_id, separator_id)]
            scored = [o.row for o in cells if o.row is not None]
            means = [r.mean_si_sdr for r in scored]
            n_events = sum(len(r.swap_events) for r in scored)
            swapped = sum(1 for r in scored if r.swap_events)
            rows.append({
                "deformation_id": deformation_id,
                "separator_id": separator_id,
                "n_cells": len(cells),
                "n_failed": sum(1 for o in cells if o.status != "ok"),
                "mean_si_sdr": statistics.fmean(means) if means else None,
                "median_si_sdr": statistics.median(means) if means else None,
                "swap_row_rate": swapped / len(scored) if scored else None,
                "total_swap_events": n_events,
            })
        return rows

    def assignment_rows(self) -> list[dict[str, Any]]:
        """Per (deformation, separator): F0-ordering statistics over
        the two-channel scored rows."""
        groups: dict[tuple[str, str], tuple[list[float], int]] = {}
        for o in self.outcomes:
            if o.row is None:
                continue
            ratios, excluded = groups.setdefault(
                (o.deformation_id, o.separator_id), ([], 0))
            if o.log2_ratio is not None:
                ratios.append(o.log2_ratio)
            elif o.ratio_excluded:
                excluded += 1
            groups[(o.deformation_id, o.separator_id)] = (ratios, excluded)
        rows = []
        for (deformation_id, separator_id) in sorted(groups):
            ratios, excluded = groups[(deformation_id, separator_id)]
            stats = stats_from_ratios(ratios, excluded)
            rows.append({
                "deformation_id": deformation_id,
                "separator_id": separator_id,
                "n_included": stats.n_included,
                "n_excluded": stats.n_excluded,
                "frac_low_f0_to_ch1": stats.frac_low_to_ch1 if ratios else None,
                "mean_log2_ratio": statistics.fmean(ratios) if ratios else None,
                "hist_density": stats.histogram_density,
            })
        return rows

    def summary(self, config_sha256: str) -> dict[str, Any]:
        scored = [o.row.mean_si_sdr for o in self.outcomes if o.row is not None]
        events = sum(len(o.row.swap_events) for o in self.outcomes if o.row is not None)
        return {
            "tool": {"name": "sepprobe", "version": __version__},
            "config_sha256": config_sha256,
            "reference_mode": self.resolved_config["reference_mode"],
            "seed": self.resolved_config["seed"],
            "n_cells": len(self.outcomes),
            "n_ok": len(self.outcomes) - self.n_failed,
            "n_failed": self.n_failed,
            "mean_si_sdr": statistics.fmean(scored) if scored else None,
            "median_si_sdr": statistics.median(scored) if scored else None,
            "total_swap_events": events,
        }


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _num(entry: dict, key: str, default=None, required: bool = False) -> float:
    if key not in entry:
        _require(not required, f"missing required field {key!r} in {entry}")
        return default
    value = entry[key]
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"field {key!r} must be a number, got {value!r}")
    return float(value)


def resolve_config(raw: dict) -> dict:
    """Fill defaults and validate; returns a canonical JSON-ready dict.

    Raises:
        ConfigError: on any structural problem, before any cell runs.
    """
    _require(isinstance(raw, dict), "config must be a JSON object")
    known = {"seed", "sample_rate_hz", "reference_mode", "metrics",
             "stimuli", "deformations", "separators"}
    unknown = set(raw) - known
    _require(not unknown, f"unknown config fields: {sorted(unknown)}")

    resolved: dict[str, Any] = {}
    seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0,
             "seed must be a non-negative integer")
    resolved["seed"] = seed

    sr = raw.get("sample_rate_hz", 8000)
    _require(isinstance(sr, int) and sr > 0, "sample_rate_hz must be a positive integer")
    resolved["sample_rate_hz"] = sr

    mode = raw.get("reference_mode", "auto")
    _require(mode in REFERENCE_MODES,
             f"reference_mode must be one of {REFERENCE_MODES}, got {mode!r}")
    resolved["reference_mode"] = mode

    metrics_raw = raw.get("metrics", {})
    _require(isinstance(metrics_raw, dict), "metrics must be an object")
    defaults = MetricOptions()
    resolved["metrics"] = {
        "frame_ms": _num(metrics_raw, "frame_ms", defaults.frame_ms),
        "hop_ms": _num(metrics_raw, "hop_ms", defaults.hop_ms),
        "swap_margin_db": _num(metrics_raw, "swap_margin_db", defaults.swap_margin_db),
        "silence_gate_dbfs": _num(metrics_raw, "silence_gate_dbfs",
                                  defaults.silence_gate_dbfs),
        "f0_search_hz": list(metrics_raw.get("f0_search_hz", defaults.f0_search_hz)),
    }
    _require(len(resolved["metrics"]["f0_search_hz"]) == 2,
             "f0_search_hz must be [low, high]")

    stimuli = raw.get("stimuli")
    _require(isinstance(stimuli, list) and len(stimuli) > 0,
             "config needs a non-empty stimuli list")
    resolved["stimuli"] = [_resolve_stimulus(s) for s in stimuli]

    deformations = raw.get("deformations", [{"type": "none"}])
    _require(isinstance(deformations, list) and len(deformations) > 0,
             "deformations must be a non-empty list")
    resolved["deformations"] = [_resolve_deformation(d) for d in deformations]

    separators = raw.get("separators")
    _require(isinstance(separators, list) and len(separators) > 0,
             "config needs a non-empty separators list")
    resolved["separators"] = [_resolve_separator(s) for s in separators]

    # expansion must yield unique ids in every dimension
    for label, ids in (
        ("stimulus", [s.stimulus_id for s in prepare_stimuli(resolved)]),
        ("deformation", [d.deformation_id for d in prepare_deformations(resolved)]),
        ("separator", [s.separator_id for s in build_separators(resolved)]),
    ):
        dupes = {i for i in ids if ids.count(i) > 1}
        _require(not dupes, f"duplicate {label} ids after expansion: {sorted(dupes)}")
    return resolved


def _resolve_stimulus(entry: dict) -> dict:
    _require(isinstance(entry, dict), f"stimulus entries must be objects, got {entry!r}")
    kind = entry.get("type")
    _require(kind in STIMULUS_TYPES,
             f"stimulus type must be one of {STIMULUS_TYPES}, got {kind!r}")
    out: dict[str, Any] = {"type": kind}
    if kind == "alternating_tones":
        out["id"] = str(entry.get("id", "alt"))
        out["f0_a_hz"] = _num(entry, "f0_a_hz", 117.0)
        out["f0_b_hz"] = _num(entry, "f0_b_hz", 201.0)
        out["harmonics"] = list(entry.get("harmonics", [1, 2, 3]))
        out["period_ms"] = _num(entry, "period_ms", 62.0)
        out["duration_s"] = _num(entry, "duration_s", 3.0)
    elif kind == "tone_grid":
        out["id_prefix"] = str(entry.get("id_prefix", "alt"))
        out["f0_a_hz"] = _num(entry, "f0_a_hz", 117.0)
        out["f0_b_hz"] = _num(entry, "f0_b_hz", 201.0)
        out["harmonics"] = list(entry.get("harmonics", [1, 2, 3]))
        out["periods_ms"] = list(entry.get("periods_ms", GRID_PERIODS_MS))
        out["duration_s"] = _num(entry, "duration_s", 3.0)
        _require(len(out["periods_ms"]) > 0, "tone_grid needs periods_ms")
    else:
        _require("path_a" in entry and "path_b" in entry,
                 "speech_pair needs path_a and path_b")
        out["id"] = str(entry.get("id", Path(str(entry["path_a"])).stem))
        out["path_a"] = str(entry["path_a"])
        out["path_b"] = str(entry["path_b"])
        out["gain_db_b"] = _num(entry, "gain_db_b", 0.0)
    return out


def _resolve_deformation(entry: dict) -> dict:
    _require(isinstance(entry, dict), f"deformation entries must be objects, got {entry!r}")
    kind = entry.get("type")
    _require(kind in DEFORMATION_TYPES,
             f"deformation type must be one of {DEFORMATION_TYPES}, got {kind!r}")
    out: dict[str, Any] = {"type": kind}
    if kind == "filter":
        fkind = entry.get("kind")
        if fkind in ("lowpass", "highpass"):
            out["kind"] = fkind
            out["cutoff_hz"] = _num(entry, "cutoff_hz", required=True)
        elif fkind == "bandstop":
            out["kind"] = fkind
            out["f_lo_hz"] = _num(entry, "f_lo_hz", required=True)
            out["f_hi_hz"] = _num(entry, "f_hi_hz", required=True)
        else:
            raise ConfigError(f"filter kind must be lowpass/highpass/bandstop, got {fkind!r}")
        out["transition_hz"] = _num(entry, "transition_hz", 20.0)
    elif kind == "filter_preset":
        name = entry.get("name")
        _require(isinstance(name, str) and name, "filter_preset needs a name")
        preset_filters(name)
        out["name"] = name
    elif kind == "mute":
        target = entry.get("target", MUTE_SOURCE_A)
        _require(target in (MUTE_SOURCE_A, MUTE_SOURCE_B, "mixture"),
                 f"mute target must be source_a/source_b/mixture, got {target!r}")
        out["target"] = target
        out["start_s"] = _num(entry, "start_s", required=True)
        out["duration_ms"] = _num(entry, "duration_ms", required=True)
    else:
        out["durations_ms"] = list(entry.get("durations_ms", GRID_MUTE_MS))
        draws = entry.get("draws", GRID_SEEDS)
        _require(isinstance(draws, int) and draws > 0,
                 "mute_grid draws must be a positive integer")
        out["draws"] = draws
        _require(len(out["durations_ms"]) > 0, "mute_grid needs durations_ms")
    return out


def _resolve_separator(entry: dict) -> dict:
    _require(isinstance(entry, dict), f"separator entries must be objects, got {entry!r}")
    kind = entry.get("kind")
    _require(kind in SEPARATOR_KINDS,
             f"separator kind must be one of {SEPARATOR_KINDS}, got {kind!r}")
    out: dict[str, Any] = {"kind": kind, "id": str(entry.get("id", kind))}
    if "stft" in entry:
        stft_raw = entry["stft"]
        _require(isinstance(stft_raw, dict), "separator stft must be an object")
        out["stft"] = {
            "window_len": int(_num(stft_raw, "window_len", 64)),
            "hop": int(_num(stft_raw, "hop", 32)),
            "fft_len": int(_num(stft_raw, "fft_len", 64)),
        }
    if kind == "external":
        template = entry.get("command_template")
        _require(isinstance(template, str) and template,
                 "external separator needs command_template")
        out["command_template"] = template
        out["timeout_s"] = _num(entry, "timeout_s", 120.0)
    if kind in ("external", "identity_split"):
        num = entry.get("num_speakers", 2)
        _require(isinstance(num, int) and num >= 2, "num_speakers must be an integer >= 2")
        out["num_speakers"] = num
    return out


def prepare_stimuli(resolved: dict) -> list[PreparedStimulus]:
    """Synthesize or load every expanded stimulus."""
    sr = resolved["sample_rate_hz"]
    prepared = []
    for entry in resolved["stimuli"]:
        if entry["type"] == "alternating_tones":
            prepared.append(_make_alternating(entry["id"], entry, entry["period_ms"], sr))
        elif entry["type"] == "tone_grid":
            for period_ms in entry["periods_ms"]:
                sid = f"{entry['id_prefix']}_p{int(round(period_ms)):03d}ms"
                prepared.append(_make_alternating(sid, entry, period_ms, sr))
        else:
            try:
                mixture, sources = mix_speech(SpeechMixSpec(
                    path_a=entry["path_a"], path_b=entry["path_b"],
                    gain_db_b=entry["gain_db_b"]))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"stimulus {entry['id']!r}: {exc}") from exc
            if mixture.sample_rate_hz != sr:
                raise ConfigError(
                    f"stimulus {entry['id']!r} is at {mixture.sample_rate_hz} Hz, "
                    f"config says {sr} Hz")
            prepared.append(PreparedStimulus(entry["id"], mixture, tuple(sources)))
    return prepared


def _make_alternating(stimulus_id: str, entry: dict, period_ms: float,
                      sr: int) -> PreparedStimulus:
    try:
        spec = AlternatingMixtureSpec(
            tone_a=HarmonicToneSpec(f0_hz=entry["f0_a_hz"],
                                    harmonics=tuple(int(k) for k in entry["harmonics"])),
            tone_b=HarmonicToneSpec(f0_hz=entry["f0_b_hz"],
                                    harmonics=tuple(int(k) for k in entry["harmonics"])),
            tone_period_s=period_ms / 1000.0,
            duration_s=entry["duration_s"],
        )
        mixture, sources, _ = synth_alternating_mixture(spec, sample_rate_hz=sr)
    except ValueError as exc:
        raise ConfigError(f"stimulus {stimulus_id!r}: {exc}") from exc
    return PreparedStimulus(stimulus_id, mixture, tuple(sources),
                            half_period_s=period_ms / 2000.0)


def prepare_deformations(resolved: dict) -> list[PreparedDeformation]:
    sr = resolved["sample_rate_hz"]
    prepared = []
    for entry in resolved["deformations"]:
        kind = entry["type"]
        if kind == "none":
            prepared.append(PreparedDeformation("none", "none"))
        elif kind == "filter":
            spec = _filter_spec_from(entry)
            _check_filter_vs_rate(spec, sr)
            prepared.append(PreparedDeformation(spec.label(), "filter", filter_spec=spec))
        elif kind == "filter_preset":
            for spec in preset_filters(entry["name"]):
                _check_filter_vs_rate(spec, sr)
                prepared.append(PreparedDeformation(spec.label(), "filter",
                                                    filter_spec=spec))
        elif kind == "mute":
            dur_ms = entry["duration_ms"]
            did = f"mute_{entry['target']}_{dur_ms:g}ms"
            prepared.append(PreparedDeformation(
                did, "mute", mute_target=entry["target"],
                mute_start_s=entry["start_s"], mute_duration_s=dur_ms / 1000.0))
        else:
            for dur_ms in entry["durations_ms"]:
                for draw in range(entry["draws"]):
                    did = f"mute{int(round(dur_ms)):03d}ms_d{draw:02d}"
                    prepared.append(PreparedDeformation(
                        did, "mute", mute_target="random_source",
                        mute_duration_s=dur_ms / 1000.0))
    return prepared


def _filter_spec_from(entry: dict) -> FilterSpec:
    try:
        if entry["kind"] == "lowpass":
            return FilterSpec(kind="lowpass", f_hi_hz=entry["cutoff_hz"],
                              transition_hz=entry["transition_hz"])
        if entry["kind"] == "highpass":
            return FilterSpec(kind="highpass", f_lo_hz=entry["cutoff_hz"],
                              transition_hz=entry["transition_hz"])
        return FilterSpec(kind="bandstop", f_lo_hz=entry["f_lo_hz"],
                          f_hi_hz=entry["f_hi_hz"],
                          transition_hz=entry["transition_hz"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _check_filter_vs_rate(spec: FilterSpec, sr: int) -> None:
    nyquist = sr / 2.0
    for cutoff in (spec.f_lo_hz, spec.f_hi_hz):
        if cutoff is not None and cutoff >= nyquist:
            raise ConfigError(
                f"filter {spec.label()} cutoff {cutoff:g} Hz is at or above "
                f"the Nyquist frequency {nyquist:g} Hz")


def build_separators(resolved: dict) -> list[SeparatorDescriptor]:
    descriptors = []
    for entry in resolved["separators"]:
        kwargs: dict[str, Any] = {"kind": entry["kind"], "separator_id": entry["id"]}
        if "stft" in entry:
            s = entry["stft"]
            kwargs["stft"] = StftConfig(window_len=s["window_len"], hop=s["hop"],
                                        fft_len=s["fft_len"])
        if entry["kind"] == "external":
            kwargs["command_template"] = entry["command_template"]
            kwargs["timeout_s"] = entry["timeout_s"]
        if "num_speakers" in entry:
            kwargs["num_speakers"] = entry["num_speakers"]
        try:
            descriptors.append(SeparatorDescriptor(**kwargs))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return descriptors


def _place_mute(stim: PreparedStimulus, deform: PreparedDeformation,
                rng: np.random.Generator) -> MuteEvent:
    """Resolve a mute's target and start for one cell.

    Random placements land inside (or centered on) one of the target
    source's bursts, away from the signal edges, so every draw removes
    signal that was actually present.
    """
    duration = deform.mute_duration_s
    target = deform.mute_target
    if target == "random_source":
        target = MUTE_SOURCE_A if rng.integers(0, 2) == 0 else MUTE_SOURCE_B
    if deform.mute_start_s is not None:
        return MuteEvent(target=target, start_s=deform.mute_start_s,
                         duration_s=duration)
    total = stim.mixture.duration_s
    margin = min(MUTE_EDGE_MARGIN_S, total / 8.0)
    if stim.half_period_s is None or target == "mixture":
        span = max(total - duration - 2.0 * margin, 0.0)
        return MuteEvent(target=target, start_s=margin + rng.random() * span,
                         duration_s=duration)
    half = stim.half_period_s
    parity = 0 if target == MUTE_SOURCE_A else 1
    first = math.ceil((margin / half - parity) / 2.0)
    last = math.floor(((total - margin) / half - 1.0 - parity) / 2.0)
    k = int(rng.integers(first, last + 1))
    burst_start = (2 * k + parity) * half
    if duration <= half:
        start = burst_start + rng.random() * (half - duration)
    else:
        start = burst_start + (half - duration) / 2.0
    return MuteEvent(target=target, start_s=start, duration_s=duration)


def _run_cell(stim: PreparedStimulus, deform: PreparedDeformation,
              descriptor: SeparatorDescriptor, mode: str,
              metrics: MetricOptions, rng: np.random.Generator) -> CellOutcome:
    outcome = CellOutcome(stim.stimulus_id, deform.deformation_id,
                          descriptor.separator_id, status="ok")
    mixture, sources = stim.mixture, list(stim.sources)
    try:
        if deform.kind == "filter":
            spec = deform.filter_spec
            mixture = apply_filter(mixture, spec)
            sources = [apply_filter(s, spec) for s in sources]
            outcome.detail = spec.label()
        elif deform.kind == "mute":
            event = _place_mute(stim, deform, rng)
            mixture, sources = apply_mute(mixture, sources, event)
            outcome.detail = (f"mute {event.target} @{event.start_s:.4f}s "
                              f"{event.duration_s * 1000.0:g}ms")

        if mode == "deformed" or (mode == "auto" and deform.kind == "mute"):
            references = sources
        else:
            references = list(stim.sources)

        result = run_separator(descriptor, mixture, sources)
        result = SeparationResult(result.estimates, result.separator_id,
                                  stimulus_id=stim.stimulus_id,
                                  deformation_id=deform.deformation_id)
        row = pit_eval(result, references)
        if result.n_channels == 2:
            events = detect_swaps(result, references,
                                  frame_ms=metrics.frame_ms,
                                  margin_db=metrics.swap_margin_db,
                                  silence_gate_dbfs=metrics.silence_gate_dbfs)
            row = EvalRow(
                stimulus_id=row.stimulus_id, deformation_id=row.deformation_id,
                separator_id=row.separator_id,
                chosen_permutation=row.chosen_permutation,
                si_sdr_per_channel=row.si_sdr_per_channel,
                mean_si_sdr=row.mean_si_sdr, swap_events=tuple(events))
            ratio = log2_f0_ratio(result, search_hz=tuple(metrics.f0_search_hz))
            if ratio is None:
                outcome.ratio_excluded = True
            else:
                outcome.log2_ratio = ratio
        outcome.row = row
    except (SeparatorError, ValueError) as exc:
        outcome.status = "failed"
        outcome.error = str(exc)
    return outcome


def run_experiment(config: dict, jobs: int = 1) -> ReportBundle:
    """Expand the config and run every cell.

    Cell failures become recorded outcomes; only config problems raise.
    The per-cell rng is seeded from (seed, stimulus index, deformation
    index), so results do not depend on worker scheduling and mute
    placements are shared across separators within a cell.
    """
    resolved = resolve_config(config)
    stimuli = prepare_stimuli(resolved)
    deformations = prepare_deformations(resolved)
    separators = build_separators(resolved)
    metrics = MetricOptions(
        frame_ms=resolved["metrics"]["frame_ms"],
        hop_ms=resolved["metrics"]["hop_ms"],
        swap_margin_db=resolved["metrics"]["swap_margin_db"],
        silence_gate_dbfs=resolved["metrics"]["silence_gate_dbfs"],
        f0_search_hz=tuple(resolved["metrics"]["f0_search_hz"]),
    )
    mode = resolved["reference_mode"]
    seed = resolved["seed"]

    tasks = []
    for si, stim in enumerate(stimuli):
        for di, deform in enumerate(deformations):
            for descriptor in separators:
                tasks.append((si, di, stim, deform, descriptor))

    def execute(task):
        si, di, stim, deform, descriptor = task
        rng = np.random.default_rng([seed, si, di])
        return _run_cell(stim, deform, descriptor, mode, metrics, rng)

    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(execute, tasks))
    else:
        outcomes = [execute(t) for t in tasks]
    outcomes.sort(key=lambda o: o.key)
    return ReportBundle(resolved_config=resolved, outcomes=outcomes)


def _fmt(value, pattern: str = "%.4f") -> str:
    if value is None:
        return ""
    return pattern % value


def _fmt_events(row: EvalRow | None) -> str:
    if row is None or not row.swap_events:
        return ""
    parts = []
    for e in row.swap_events:
        perm = "-".join(str(p) for p in e.permutation)
        parts.append(f"{e.start_frame}:{e.duration_frames}:{perm}")
    return ";".join(parts)


def emit_reports(bundle: ReportBundle, out_dir: str | Path) -> None:
    """Write rows.csv, aggregate.csv, assignment.csv, summary.json and
    config.resolved.json. Output is byte-stable for a given config and
    seed: fixed column orders, fixed float formats, no timestamps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    config_bytes = (json.dumps(bundle.resolved_config, indent=2, sort_keys=True)
                    + "\n").encode()
    (out / "config.resolved.json").write_bytes(config_bytes)
    config_sha256 = hashlib.sha256(config_bytes).hexdigest()

    with open(out / "rows.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["stimulus_id", "deformation_id", "separator_id", "status",
                         "detail", "permutation", "si_sdr_per_channel",
                         "mean_si_sdr", "n_swap_events", "swap_events", "error"])
        for o in bundle.outcomes:
            row = o.row
            writer.writerow([
                o.stimulus_id, o.deformation_id, o.separator_id, o.status,
                o.detail,
                "-".join(str(p) for p in row.chosen_permutation) if row else "",
                ";".join(_fmt(v) for v in row.si_sdr_per_channel) if row else "",
                _fmt(row.mean_si_sdr) if row else "",
                str(len(row.swap_events)) if row else "",
                _fmt_events(row),
                o.error,
            ])

    with open(out / "aggregate.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["deformation_id", "separator_id", "n_cells", "n_failed",
                         "mean_si_sdr", "median_si_sdr", "swap_row_rate",
                         "total_swap_events"])
        for r in bundle.aggregate_rows():
            writer.writerow([
                r["deformation_id"], r["separator_id"], r["n_cells"], r["n_failed"],
                _fmt(r["mean_si_sdr"]), _fmt(r["median_si_sdr"]),
                _fmt(r["swap_row_rate"]), r["total_swap_events"],
            ])

    with open(out / "assignment.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["deformation_id", "separator_id", "n_included", "n_excluded",
                         "frac_low_f0_to_ch1", "mean_log2_ratio", "hist_density"])
        for r in bundle.assignment_rows():
            writer.writerow([
                r["deformation_id"], r["separator_id"], r["n_included"],
                r["n_excluded"], _fmt(r["frac_low_f0_to_ch1"]),
                _fmt(r["mean_log2_ratio"], "%.6f"),
                ";".join("%.6f" % v for v in r["hist_density"]),
            ])

    summary = bundle.summary(config_sha256)
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")


def preset_config(name: str) -> dict:
    """Built-in experiment configs.

    "filter_sweep": alternating tones through the lowpass and highpass
        sweeps, oracle and identity separators, clean references.
    "bandstop_suite": alternating tones through the eight stop bands.
    "mute_robustness": the tone-period grid crossed with random mutes,
        ten draws each, scored against deformed references.
    """
    presets = {
        "filter_sweep": {
            "seed": 0,
            "stimuli": [{"type": "alternating_tones", "id": "alt62"}],
            "deformations": [
                {"type": "none"},
                {"type": "filter_preset", "name": "lp_sweep"},
                {"type": "filter_preset", "name": "hp_sweep"},
            ],
            "separators": [
                {"kind": "irm_oracle", "id": "irm"},
                {"kind": "ibm_oracle", "id": "ibm"},
                {"kind": "identity_split", "id": "identity"},
            ],
        },
        "bandstop_suite": {
            "seed": 0,
            "stimuli": [{"type": "alternating_tones", "id": "alt62"}],
            "deformations": [
                {"type": "none"},
                {"type": "filter_preset", "name": "bandstop_suite"},
            ],
            "separators": [
                {"kind": "irm_oracle", "id": "irm"},
                {"kind": "identity_split", "id": "identity"},
            ],
        },
        "mute_robustness": {
            "seed": 0,
            "stimuli": [{"type": "tone_grid", "id_prefix": "alt"}],
            "deformations": [
                {"type": "none"},
                {"type": "mute_grid"},
            ],
            "separators": [{"kind": "irm_oracle", "id": "irm"}],
        },
    }
    if name not in presets:
        raise ConfigError(
            f"unknown preset {name!r}; available: {sorted(presets)}")
    return presets[name]
