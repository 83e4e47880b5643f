"""Command line front end.

    sepprobe synth   --type alternating_tones --out mix.wav
    sepprobe deform  --in mix.wav --out lp.wav --lowpass 700
    sepprobe eval    --est e1.wav e2.wav --ref r1.wav r2.wav
    sepprobe run     --config exp.json --out reports/
    sepprobe stats   --wav e1.wav --wav e2.wav

`run` exits 0 on full success, 2 when any cell recorded a failure, and
1 on a config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from sepprobe import __version__
from sepprobe.analysis import estimate_f0
from sepprobe.core import Waveform, read_wav, write_wav
from sepprobe.deform import FilterSpec, apply_filter
from sepprobe.harness import (
    ConfigError,
    emit_reports,
    preset_config,
    run_experiment,
)
from sepprobe.metrics import SeparationResult, detect_swaps, pit_eval
from sepprobe.stimulus import (
    MUTE_MIXTURE,
    AlternatingMixtureSpec,
    HarmonicToneSpec,
    MuteEvent,
    apply_mute,
    synth_alternating_mixture,
    synth_tone,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepprobe",
        description="Probe source-separation systems with synthetic "
                    "stimuli, deformations, and permutation-aware metrics.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a test stimulus")
    p.add_argument("--type", choices=("alternating_tones", "tone"),
                   default="alternating_tones")
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--sources-out", default=None,
                   help="directory for source_1.wav / source_2.wav")
    p.add_argument("--f0-a", type=float, default=117.0)
    p.add_argument("--f0-b", type=float, default=201.0)
    p.add_argument("--harmonics", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--period-ms", type=float, default=62.0)
    p.add_argument("--duration", type=float, default=3.0)
    p.add_argument("--sample-rate", type=int, default=8000)
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")

    p = sub.add_parser("deform", help="apply one deformation to a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--lowpass", type=float, metavar="HZ")
    group.add_argument("--highpass", type=float, metavar="HZ")
    group.add_argument("--bandstop", type=float, nargs=2, metavar=("LO_HZ", "HI_HZ"))
    group.add_argument("--mute", type=float, nargs=2, metavar=("START_S", "DUR_MS"))
    p.add_argument("--transition-hz", type=float, default=20.0)
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")

    p = sub.add_parser("eval", help="score estimates against references")
    p.add_argument("--est", nargs="+", required=True, help="estimate WAVs")
    p.add_argument("--ref", nargs="+", required=True, help="reference WAVs")
    p.add_argument("--frame-ms", type=float, default=20.0)
    p.add_argument("--swap-margin-db", type=float, default=3.0)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("run", help="run a batch experiment")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="experiment config JSON file")
    source.add_argument("--preset",
                        help="built-in config: filter_sweep, bandstop_suite, "
                             "or mute_robustness")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")

    p = sub.add_parser("stats", help="fundamental-frequency statistics")
    p.add_argument("--wav", action="append", required=True,
                   help="repeatable; with two files the channel-2 / "
                        "channel-1 log2 F0 ratio is included")
    p.add_argument("--json", action="store_true")
    return parser


def _cmd_synth(args) -> int:
    sr = args.sample_rate
    if args.type == "tone":
        tone = synth_tone(
            HarmonicToneSpec(f0_hz=args.f0_a, harmonics=tuple(args.harmonics),
                             duration_s=args.duration), sr)
        write_wav(tone, args.out, encoding=args.encoding)
        print(f"wrote {args.out} ({tone.duration_s:.3f} s at {sr} Hz)")
        return 0
    spec = AlternatingMixtureSpec(
        tone_a=HarmonicToneSpec(f0_hz=args.f0_a, harmonics=tuple(args.harmonics)),
        tone_b=HarmonicToneSpec(f0_hz=args.f0_b, harmonics=tuple(args.harmonics)),
        tone_period_s=args.period_ms / 1000.0,
        duration_s=args.duration,
    )
    mixture, sources, _ = synth_alternating_mixture(spec, sample_rate_hz=sr)
    write_wav(mixture, args.out, encoding=args.encoding)
    print(f"wrote {args.out} ({mixture.duration_s:.3f} s at {sr} Hz)")
    if args.sources_out:
        outdir = Path(args.sources_out)
        outdir.mkdir(parents=True, exist_ok=True)
        for i, source in enumerate(sources, start=1):
            path = outdir / f"source_{i}.wav"
            write_wav(source, path, encoding=args.encoding)
            print(f"wrote {path}")
    return 0


def _cmd_deform(args) -> int:
    waveform = read_wav(args.input)
    if args.mute is not None:
        start_s, dur_ms = args.mute
        event = MuteEvent(target=MUTE_MIXTURE, start_s=start_s,
                          duration_s=dur_ms / 1000.0)
        waveform, _ = apply_mute(waveform, [], event)
    else:
        if args.lowpass is not None:
            spec = FilterSpec(kind="lowpass", f_hi_hz=args.lowpass,
                              transition_hz=args.transition_hz)
        elif args.highpass is not None:
            spec = FilterSpec(kind="highpass", f_lo_hz=args.highpass,
                              transition_hz=args.transition_hz)
        else:
            lo, hi = args.bandstop
            spec = FilterSpec(kind="bandstop", f_lo_hz=lo, f_hi_hz=hi,
                              transition_hz=args.transition_hz)
        waveform = apply_filter(waveform, spec)
    write_wav(waveform, args.out, encoding=args.encoding)
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    if len(args.est) != len(args.ref):
        print(f"error: {len(args.est)} estimates vs {len(args.ref)} references",
              file=sys.stderr)
        return 1
    if len(args.est) < 2:
        print("error: need at least 2 channels", file=sys.stderr)
        return 1
    estimates = tuple(read_wav(p) for p in args.est)
    references = [read_wav(p) for p in args.ref]
    result = SeparationResult(estimates, separator_id="cli")
    row = pit_eval(result, references)
    events = []
    if result.n_channels == 2:
        events = detect_swaps(result, references, frame_ms=args.frame_ms,
                              margin_db=args.swap_margin_db)
    report = {
        "permutation": list(row.chosen_permutation),
        "si_sdr_per_channel": [round(v, 4) for v in row.si_sdr_per_channel],
        "mean_si_sdr": round(row.mean_si_sdr, 4),
        "swap_events": [
            {"start_frame": e.start_frame, "duration_frames": e.duration_frames,
             "permutation": list(e.permutation)} for e in events],
    }
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        perm = "-".join(str(p) for p in row.chosen_permutation)
        print(f"permutation: {perm}")
        for i, value in enumerate(row.si_sdr_per_channel, start=1):
            print(f"si_sdr_ch{i}: {value:.4f} dB")
        print(f"mean_si_sdr: {row.mean_si_sdr:.4f} dB")
        print(f"swap_events: {len(events)}")
        for e in events:
            perm = "-".join(str(p) for p in e.permutation)
            print(f"  frame {e.start_frame} +{e.duration_frames} -> {perm}")
    return 0


def _cmd_run(args) -> int:
    try:
        if args.config:
            try:
                with open(args.config) as f:
                    config = json.load(f)
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        else:
            config = preset_config(args.preset)
        if args.seed is not None:
            config = dict(config, seed=args.seed)
        bundle = run_experiment(config, jobs=max(args.jobs, 1))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    emit_reports(bundle, args.out)
    n = len(bundle.outcomes)
    print(f"{n} cells, {bundle.n_failed} failed; reports in {args.out}")
    return 2 if bundle.n_failed else 0


def _cmd_stats(args) -> int:
    report = {"files": []}
    means = []
    for path in args.wav:
        track = estimate_f0(read_wav(path))
        mean = track.mean_f0_hz
        voiced = float(sum(track.voiced)) / len(track.voiced) if len(track.voiced) else 0.0
        means.append(mean)
        report["files"].append({
            "path": str(path),
            "mean_f0_hz": None if mean is None else round(mean, 2),
            "voiced_fraction": round(voiced, 3),
        })
    if len(args.wav) == 2 and None not in means:
        import math
        report["log2_f0_ratio_ch2_ch1"] = round(math.log2(means[1] / means[0]), 4)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for entry in report["files"]:
            f0 = "unvoiced" if entry["mean_f0_hz"] is None else f"{entry['mean_f0_hz']} Hz"
            print(f"{entry['path']}: mean_f0 {f0}, voiced {entry['voiced_fraction']:.1%}")
        if "log2_f0_ratio_ch2_ch1" in report:
            print(f"log2_f0_ratio_ch2_ch1: {report['log2_f0_ratio_ch2_ch1']}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "synth": _cmd_synth,
        "deform": _cmd_deform,
        "eval": _cmd_eval,
        "run": _cmd_run,
        "stats": _cmd_stats,
    }
    try:
        return handlers[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
