import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy.io import wavfile

from sepprobe_adapter.cli import (
    CHECKPOINT_ENV_VAR,
    AdapterConfig,
    AdapterError,
    adapt,
    main,
)

RATE = 8000


class Splitter(torch.nn.Module):
    def forward(self, mix: torch.Tensor) -> torch.Tensor:
        return torch.cat([mix * 0.6, mix * 0.4], dim=0)


class BatchedSplitter(torch.nn.Module):
    def forward(self, mix: torch.Tensor) -> torch.Tensor:
        return torch.stack([mix[0] * 0.5, mix[0] * -0.5], dim=0).unsqueeze(0)


class TrimmingSplitter(torch.nn.Module):
    def forward(self, mix: torch.Tensor) -> torch.Tensor:
        head = mix[:, :-64]
        return torch.cat([head, head], dim=0)


class TrioSplitter(torch.nn.Module):
    def forward(self, mix: torch.Tensor) -> torch.Tensor:
        return torch.cat([mix, mix, mix], dim=0)


class FlatModel(torch.nn.Module):
    def forward(self, mix: torch.Tensor) -> torch.Tensor:
        return mix[0]


def _saved(module: torch.nn.Module, path) -> str:
    torch.jit.script(module).save(str(path))
    return str(path)


@pytest.fixture(scope="module")
def ckpts(tmp_path_factory):
    d = tmp_path_factory.mktemp("ckpts")
    return {
        "splitter": _saved(Splitter(), d / "splitter.pt"),
        "batched": _saved(BatchedSplitter(), d / "batched.pt"),
        "trimming": _saved(TrimmingSplitter(), d / "trimming.pt"),
        "trio": _saved(TrioSplitter(), d / "trio.pt"),
        "flat": _saved(FlatModel(), d / "flat.pt"),
    }


@pytest.fixture(scope="module")
def mixture(tmp_path_factory):
    t = np.arange(RATE // 2) / RATE
    samples = (0.4 * np.sin(2 * np.pi * 220.0 * t)).astype(np.float32)
    path = tmp_path_factory.mktemp("wavs") / "mix.wav"
    wavfile.write(path, RATE, samples)
    return path, samples


class TestCliContract:
    def test_round_trip(self, ckpts, mixture, tmp_path):
        path, samples = mixture
        code = main(["--checkpoint", ckpts["splitter"], "--input", str(path),
                     "--outdir", str(tmp_path), "--num-speakers", "2"])
        assert code == 0
        rate1, est1 = wavfile.read(tmp_path / "est1.wav")
        rate2, est2 = wavfile.read(tmp_path / "est2.wav")
        assert rate1 == rate2 == RATE
        assert est1.dtype == np.float32
        assert len(est1) == len(samples)
        np.testing.assert_allclose(est1, samples * 0.6, atol=1e-7)
        np.testing.assert_allclose(est2, samples * 0.4, atol=1e-7)

    def test_batch_dim_output_accepted(self, ckpts, mixture, tmp_path):
        path, samples = mixture
        code = main(["--checkpoint", ckpts["batched"], "--input", str(path),
                     "--outdir", str(tmp_path)])
        assert code == 0
        _, est2 = wavfile.read(tmp_path / "est2.wav")
        np.testing.assert_allclose(est2, samples * -0.5, atol=1e-7)

    def test_three_speakers(self, ckpts, mixture, tmp_path):
        path, _ = mixture
        code = main(["--checkpoint", ckpts["trio"], "--input", str(path),
                     "--outdir", str(tmp_path), "--num-speakers", "3"])
        assert code == 0
        assert sorted(p.name for p in tmp_path.glob("est*.wav")) == [
            "est1.wav", "est2.wav", "est3.wav"]

    def test_short_output_padded_to_input_length(self, ckpts, mixture, tmp_path):
        path, samples = mixture
        code = main(["--checkpoint", ckpts["trimming"], "--input", str(path),
                     "--outdir", str(tmp_path)])
        assert code == 0
        _, est1 = wavfile.read(tmp_path / "est1.wav")
        assert len(est1) == len(samples)
        assert np.all(est1[-64:] == 0.0)

    def test_pcm16_input_rescaled(self, ckpts, tmp_path):
        t = np.arange(RATE // 4) / RATE
        pcm = (16384 * np.sin(2 * np.pi * 110.0 * t)).astype(np.int16)
        path = tmp_path / "pcm.wav"
        wavfile.write(path, RATE, pcm)
        code = main(["--checkpoint", ckpts["splitter"], "--input", str(path),
                     "--outdir", str(tmp_path)])
        assert code == 0
        _, est1 = wavfile.read(tmp_path / "est1.wav")
        expected = (pcm.astype(np.float32) / 32768.0) * 0.6
        np.testing.assert_allclose(est1, expected, atol=1e-7)

    def test_checkpoint_from_env(self, ckpts, mixture, tmp_path, monkeypatch):
        path, _ = mixture
        monkeypatch.setenv(CHECKPOINT_ENV_VAR, ckpts["splitter"])
        code = main(["--input", str(path), "--outdir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "est1.wav").exists()


class TestCliErrors:
    def test_missing_checkpoint_file(self, mixture, tmp_path, capsys):
        path, _ = mixture
        code = main(["--checkpoint", str(tmp_path / "no.pt"),
                     "--input", str(path), "--outdir", str(tmp_path)])
        assert code == 2
        assert "checkpoint not found" in capsys.readouterr().err

    def test_no_checkpoint_configured(self, mixture, tmp_path, monkeypatch, capsys):
        path, _ = mixture
        monkeypatch.delenv(CHECKPOINT_ENV_VAR, raising=False)
        code = main(["--input", str(path), "--outdir", str(tmp_path)])
        assert code == 2
        assert CHECKPOINT_ENV_VAR in capsys.readouterr().err

    def test_corrupt_checkpoint(self, mixture, tmp_path, capsys):
        bad = tmp_path / "bad.pt"
        bad.write_bytes(b"not a torchscript archive")
        path, _ = mixture
        code = main(["--checkpoint", str(bad), "--input", str(path),
                     "--outdir", str(tmp_path)])
        assert code == 2
        assert "could not load checkpoint" in capsys.readouterr().err

    def test_channel_mismatch(self, ckpts, mixture, tmp_path, capsys):
        path, _ = mixture
        code = main(["--checkpoint", ckpts["splitter"], "--input", str(path),
                     "--outdir", str(tmp_path), "--num-speakers", "3"])
        assert code == 2
        err = capsys.readouterr().err
        assert "produced 2 channels, expected 3" in err
        assert not list(tmp_path.glob("est*.wav"))

    def test_bad_output_shape(self, ckpts, mixture, tmp_path, capsys):
        path, _ = mixture
        code = main(["--checkpoint", ckpts["flat"], "--input", str(path),
                     "--outdir", str(tmp_path)])
        assert code == 2
        assert "expected [C, T]" in capsys.readouterr().err

    def test_unreadable_input(self, ckpts, tmp_path, capsys):
        code = main(["--checkpoint", ckpts["splitter"],
                     "--input", str(tmp_path / "missing.wav"),
                     "--outdir", str(tmp_path)])
        assert code == 2
        assert "could not read input" in capsys.readouterr().err

    def test_stereo_input_rejected(self, ckpts, tmp_path, capsys):
        path = tmp_path / "stereo.wav"
        wavfile.write(path, RATE, np.zeros((100, 2), dtype=np.float32))
        code = main(["--checkpoint", ckpts["splitter"], "--input", str(path),
                     "--outdir", str(tmp_path)])
        assert code == 2
        assert "must be mono" in capsys.readouterr().err

    def test_num_speakers_below_two(self, ckpts, mixture, tmp_path, capsys):
        path, _ = mixture
        code = main(["--checkpoint", ckpts["splitter"], "--input", str(path),
                     "--outdir", str(tmp_path), "--num-speakers", "1"])
        assert code == 2
        assert "at least 2" in capsys.readouterr().err


class TestLibrary:
    def test_adapt_returns_paths_in_channel_order(self, ckpts, mixture, tmp_path):
        path, _ = mixture
        config = AdapterConfig(checkpoint=Path(ckpts["splitter"]))
        written = adapt(config, path, tmp_path / "nested" / "out")
        assert [p.name for p in written] == ["est1.wav", "est2.wav"]
        assert all(p.is_file() for p in written)

    def test_config_rejects_single_speaker(self, ckpts):
        with pytest.raises(AdapterError, match="at least 2"):
            AdapterConfig(checkpoint=Path(ckpts["splitter"]), num_speakers=1)


class TestEntryPoint:
    def test_console_script_runs(self, ckpts, mixture, tmp_path):
        exe = shutil.which("sepprobe-adapter")
        assert exe is not None, "package must be installed for this test"
        path, samples = mixture
        proc = subprocess.run(
            [exe, "--checkpoint", ckpts["splitter"], "--input", str(path),
             "--outdir", str(tmp_path), "--num-speakers", "2"],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        _, est1 = wavfile.read(tmp_path / "est1.wav")
        assert len(est1) == len(samples)
