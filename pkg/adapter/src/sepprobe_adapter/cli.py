"""Run a TorchScript separation checkpoint as a command-line tool.

The invocation contract is the one batch harnesses expect from any
external separator:

    sepprobe-adapter --checkpoint model.pt --input mix.wav \
        --outdir out/ --num-speakers 2

reads a mono mixture, feeds the model a float32 tensor of shape [1, T],
and writes out/est1.wav .. out/estC.wav as float32 mono at the
mixture's sample rate and length. Exit status 0 means every estimate
was written; any failure exits nonzero with a diagnostic on stderr.

The checkpoint path may also come from the SEPPROBE_ADAPTER_CHECKPOINT
environment variable, which keeps secrets and site paths out of the
harness config when the command template is shared.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile

CHECKPOINT_ENV_VAR = "SEPPROBE_ADAPTER_CHECKPOINT"

# int PCM is rescaled to [-1, 1) so the model sees the same range a
# float WAV would carry
_INT_SCALES = {np.dtype(np.int16): 2.0 ** 15, np.dtype(np.int32): 2.0 ** 31}


class AdapterError(RuntimeError):
    """Anything that should abort the invocation with a diagnostic."""


@dataclass(frozen=True)
class AdapterConfig:
    checkpoint: Path
    num_speakers: int = 2
    device: str = "cpu"

    def __post_init__(self):
        if self.num_speakers < 2:
            raise AdapterError(
                f"num_speakers must be at least 2, got {self.num_speakers}"
            )


def load_checkpoint(config: AdapterConfig) -> torch.jit.ScriptModule:
    """Load the TorchScript module onto the configured device in eval mode."""
    path = config.checkpoint
    if not path.is_file():
        raise AdapterError(f"checkpoint not found: {path}")
    try:
        model = torch.jit.load(str(path), map_location=config.device)
    except (RuntimeError, ValueError) as exc:
        raise AdapterError(f"could not load checkpoint {path}: {exc}") from exc
    model.eval()
    return model


def read_mixture(path: Path) -> tuple[np.ndarray, int]:
    """Read a mono WAV as float32 samples plus its sample rate."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise AdapterError(f"could not read input {path}: {exc}") from exc
    if data.ndim != 1:
        raise AdapterError(
            f"input must be mono, got {data.shape[1]} channels in {path}"
        )
    scale = _INT_SCALES.get(data.dtype)
    if scale is not None:
        samples = data.astype(np.float32) / scale
    elif np.issubdtype(data.dtype, np.floating):
        samples = data.astype(np.float32)
    else:
        raise AdapterError(f"unsupported sample format {data.dtype} in {path}")
    return samples, int(rate)


def _fit_length(est: np.ndarray, n: int) -> np.ndarray:
    if len(est) < n:
        return np.concatenate([est, np.zeros(n - len(est), dtype=est.dtype)])
    return est[:n]


def separate(model: torch.jit.ScriptModule, samples: np.ndarray,
             config: AdapterConfig) -> np.ndarray:
    """Run the model and return a [num_speakers, T] float32 array.

    Accepts model outputs of shape [C, T'] or [1, C, T']; estimates are
    zero-padded or truncated to the mixture length so the files written
    downstream always line up with the input sample for sample.
    """
    mix = torch.from_numpy(samples.astype(np.float32)).unsqueeze(0)
    mix = mix.to(config.device)
    try:
        with torch.no_grad():
            out = model(mix)
    except RuntimeError as exc:
        raise AdapterError(f"model forward failed: {exc}") from exc
    if not isinstance(out, torch.Tensor):
        raise AdapterError(
            f"checkpoint returned {type(out).__name__}, expected a tensor"
        )
    if out.dim() == 3 and out.shape[0] == 1:
        out = out.squeeze(0)
    if out.dim() != 2:
        raise AdapterError(
            f"checkpoint output has shape {tuple(out.shape)}, "
            f"expected [C, T] or [1, C, T]"
        )
    if out.shape[0] != config.num_speakers:
        raise AdapterError(
            f"checkpoint produced {out.shape[0]} channels, "
            f"expected {config.num_speakers}"
        )
    ests = out.cpu().numpy().astype(np.float32)
    return np.stack([_fit_length(e, len(samples)) for e in ests])


def adapt(config: AdapterConfig, input_path: Path, outdir: Path) -> list[Path]:
    """Separate one mixture and write est1.wav .. estC.wav into outdir.

    Returns:
        The written paths in channel order.
    """
    model = load_checkpoint(config)
    samples, rate = read_mixture(input_path)
    estimates = separate(model, samples, config)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, est in enumerate(estimates, start=1):
        path = outdir / f"est{i}.wav"
        wavfile.write(path, rate, est)
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepprobe-adapter",
        description="Separate a WAV mixture with a TorchScript checkpoint.",
    )
    parser.add_argument("--checkpoint",
                        help=f"TorchScript file; falls back to ${CHECKPOINT_ENV_VAR}")
    parser.add_argument("--input", required=True, help="mono mixture WAV")
    parser.add_argument("--outdir", required=True,
                        help="directory for est1.wav .. estC.wav")
    parser.add_argument("--num-speakers", type=int, default=2)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    checkpoint = args.checkpoint or os.environ.get(CHECKPOINT_ENV_VAR)
    if not checkpoint:
        print(
            f"sepprobe-adapter: no checkpoint given; pass --checkpoint "
            f"or set {CHECKPOINT_ENV_VAR}",
            file=sys.stderr,
        )
        return 2
    try:
        config = AdapterConfig(
            checkpoint=Path(checkpoint),
            num_speakers=args.num_speakers,
            device=args.device,
        )
        adapt(config, Path(args.input), Path(args.outdir))
    except (AdapterError, OSError) as exc:
        print(f"sepprobe-adapter: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
