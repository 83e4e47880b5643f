import numpy as np
import pytest

from conftest import write_separator_script
from sepprobe.core import StftConfig, Waveform, stft
from sepprobe.metrics import pit_eval
from sepprobe.separators import (
    ORACLE_STFT,
    SeparatorDescriptor,
    SeparatorError,
    run_separator,
    separate_external,
    separate_ibm,
    separate_identity,
    separate_irm,
)
from sepprobe.stimulus import (
    AlternatingMixtureSpec,
    HarmonicToneSpec,
    synth_alternating_mixture,
    synth_tone,
)

SR = 8000


@pytest.fixture(scope="module")
def alternating():
    spec = AlternatingMixtureSpec(
        tone_a=HarmonicToneSpec(f0_hz=117.0),
        tone_b=HarmonicToneSpec(f0_hz=201.0),
    )
    mixture, sources, _ = synth_alternating_mixture(spec, sample_rate_hz=SR)
    return mixture, sources


class TestDescriptor:
    def test_defaults(self):
        d = SeparatorDescriptor(kind="irm_oracle")
        assert d.separator_id == "irm_oracle"
        assert d.stft == ORACLE_STFT

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            SeparatorDescriptor(kind="magic")

    def test_external_needs_template(self):
        with pytest.raises(ValueError, match="command_template"):
            SeparatorDescriptor(kind="external")

    def test_external_needs_placeholders(self):
        with pytest.raises(ValueError, match="outdir"):
            SeparatorDescriptor(kind="external", command_template="run --input {input}")

    def test_bad_timeout(self):
        with pytest.raises(ValueError, match="timeout"):
            SeparatorDescriptor(kind="identity_split", timeout_s=0)


class TestMaskOracles:
    def test_irm_disjoint_tones_high_si_sdr(self, alternating):
        mixture, sources = alternating
        row = pit_eval(separate_irm(mixture, sources), sources)
        assert row.chosen_permutation == (0, 1)
        for value in row.si_sdr_per_channel:
            assert value >= 20.0

    def test_ibm_close_to_irm(self, alternating):
        mixture, sources = alternating
        irm = pit_eval(separate_irm(mixture, sources), sources)
        ibm = pit_eval(separate_ibm(mixture, sources), sources)
        for a, b in zip(irm.si_sdr_per_channel, ibm.si_sdr_per_channel):
            assert abs(a - b) < 1.0

    def test_irm_identical_sources_split_evenly(self):
        tone = synth_tone(HarmonicToneSpec(f0_hz=117.0, duration_s=0.5), SR)
        half = Waveform(tone.samples * 0.5, SR)
        res = separate_irm(tone, [half, half])
        for est in res.estimates:
            np.testing.assert_allclose(est.samples, tone.samples / 2, atol=1e-9)

    def test_ibm_tie_goes_to_first_channel(self):
        tone = synth_tone(HarmonicToneSpec(f0_hz=117.0, duration_s=0.5), SR)
        half = Waveform(tone.samples * 0.5, SR)
        res = separate_ibm(tone, [half, half])
        np.testing.assert_allclose(res.estimates[0].samples, tone.samples, atol=1e-9)
        assert np.max(np.abs(res.estimates[1].samples)) == 0.0

    def test_zero_source_gets_nothing(self):
        tone = synth_tone(HarmonicToneSpec(f0_hz=117.0, duration_s=0.5), SR)
        zero = Waveform(np.zeros(len(tone)), SR)
        res = separate_irm(tone, [tone, zero])
        np.testing.assert_allclose(res.estimates[0].samples, tone.samples, atol=1e-8)
        assert np.max(np.abs(res.estimates[1].samples)) == 0.0

    def test_masks_partition_mixture(self, alternating):
        # estimates must sum back to the mixture since masks sum to one
        mixture, sources = alternating
        res = separate_irm(mixture, sources)
        recon = res.estimates[0].samples + res.estimates[1].samples
        np.testing.assert_allclose(recon, mixture.samples, atol=1e-8)

    def test_irm_mask_values_bounded(self, alternating):
        mixture, sources = alternating
        mags = np.stack([np.abs(stft(s, ORACLE_STFT).frames) for s in sources])
        masks = mags / (np.sum(mags, axis=0) + 1e-12)
        assert np.all(masks >= 0.0)
        assert np.all(masks <= 1.0)
        total = np.sum(masks, axis=0)
        active = np.sum(mags, axis=0) > 1e-9
        np.testing.assert_allclose(total[active], 1.0, atol=1e-6)

    def test_sources_must_sum_to_mixture(self, alternating):
        mixture, sources = alternating
        tampered = [sources[0], Waveform(sources[1].samples * 1.5, SR)]
        with pytest.raises(ValueError, match="sum"):
            separate_irm(mixture, tampered)

    def test_rate_mismatch_rejected(self, alternating):
        mixture, sources = alternating
        wrong = [Waveform(sources[0].samples, 16000), sources[1]]
        with pytest.raises(ValueError, match="rate"):
            separate_irm(mixture, wrong)

    def test_custom_stft_config(self, alternating):
        mixture, sources = alternating
        cfg = StftConfig(window_len=128, hop=64, fft_len=128)
        res = separate_irm(mixture, sources, cfg)
        assert len(res.estimates[0]) == len(mixture)

    def test_identity_split(self, alternating):
        mixture, _ = alternating
        res = separate_identity(mixture, num_channels=3)
        assert res.n_channels == 3
        for est in res.estimates:
            np.testing.assert_array_equal(est.samples, mixture.samples / 3)


class TestExternal:
    @pytest.fixture
    def mixture(self):
        rng = np.random.default_rng(7)
        return Waveform(np.clip(rng.normal(0.0, 0.2, SR), -1.0, 1.0), SR)

    def test_copy_separator_round_trip(self, mixture, copy_separator_cmd, tmp_path):
        d = SeparatorDescriptor(kind="external", separator_id="copycat",
                                command_template=copy_separator_cmd)
        res = separate_external(d, mixture, work_root=tmp_path)
        assert res.separator_id == "copycat"
        assert res.n_channels == 2
        # float32 round trip through the WAV file
        expected = mixture.samples.astype(np.float32).astype(np.float64)
        np.testing.assert_array_equal(res.estimates[0].samples, expected)
        np.testing.assert_array_equal(res.estimates[1].samples, expected)
        pit_eval(res, [mixture, mixture])

    def test_work_dir_cleaned_on_success(self, mixture, copy_separator_cmd, tmp_path):
        d = SeparatorDescriptor(kind="external", command_template=copy_separator_cmd)
        separate_external(d, mixture, work_root=tmp_path)
        assert list(tmp_path.iterdir()) == []

    def test_nonzero_exit_carries_stderr(self, mixture, tmp_path):
        cmd = write_separator_script(tmp_path, "fail.py", """
            import sys
            sys.stderr.write("model exploded: tensor shape mismatch\\n")
            sys.exit(3)
        """)
        d = SeparatorDescriptor(kind="external", separator_id="boom",
                                command_template=cmd)
        with pytest.raises(SeparatorError, match="model exploded"):
            separate_external(d, mixture, work_root=tmp_path)

    def test_work_dir_cleaned_on_failure(self, mixture, tmp_path):
        work = tmp_path / "work"
        work.mkdir()
        cmd = write_separator_script(tmp_path, "fail.py", """
            import sys
            sys.exit(1)
        """)
        d = SeparatorDescriptor(kind="external", command_template=cmd)
        with pytest.raises(SeparatorError):
            separate_external(d, mixture, work_root=work)
        assert list(work.iterdir()) == []

    def test_missing_estimate_file(self, mixture, tmp_path):
        cmd = write_separator_script(tmp_path, "one.py", """
            import argparse, shutil, os
            p = argparse.ArgumentParser()
            p.add_argument("--input", required=True)
            p.add_argument("--outdir", required=True)
            p.add_argument("--num-speakers", type=int, default=2)
            a = p.parse_args()
            shutil.copyfile(a.input, os.path.join(a.outdir, "est1.wav"))
        """)
        d = SeparatorDescriptor(kind="external", command_template=cmd)
        with pytest.raises(SeparatorError, match=r"expected 2 estimate files.*est1\.wav"):
            separate_external(d, mixture, work_root=tmp_path)

    def test_sample_rate_mismatch(self, mixture, tmp_path):
        cmd = write_separator_script(tmp_path, "rate.py", """
            import argparse, os, struct, wave
            p = argparse.ArgumentParser()
            p.add_argument("--input", required=True)
            p.add_argument("--outdir", required=True)
            p.add_argument("--num-speakers", type=int, default=2)
            a = p.parse_args()
            for i in range(1, a.num_speakers + 1):
                with wave.open(os.path.join(a.outdir, f"est{i}.wav"), "wb") as w:
                    w.setnchannels(1)
                    w.setsampwidth(2)
                    w.setframerate(16000)
                    w.writeframes(struct.pack("<100h", *([0] * 100)))
        """)
        d = SeparatorDescriptor(kind="external", command_template=cmd)
        with pytest.raises(SeparatorError, match="16000"):
            separate_external(d, mixture, work_root=tmp_path)

    def test_short_output_padded(self, mixture, tmp_path):
        cmd = write_separator_script(tmp_path, "trim.py", """
            import argparse, os
            from scipy.io import wavfile
            p = argparse.ArgumentParser()
            p.add_argument("--input", required=True)
            p.add_argument("--outdir", required=True)
            p.add_argument("--num-speakers", type=int, default=2)
            a = p.parse_args()
            sr, x = wavfile.read(a.input)
            for i in range(1, a.num_speakers + 1):
                wavfile.write(os.path.join(a.outdir, f"est{i}.wav"), sr, x[:-100])
        """)
        d = SeparatorDescriptor(kind="external", command_template=cmd)
        res = separate_external(d, mixture, work_root=tmp_path)
        assert len(res.estimates[0]) == len(mixture)
        assert np.all(res.estimates[0].samples[-100:] == 0.0)

    def test_length_mismatch_beyond_tolerance(self, mixture, tmp_path):
        cmd = write_separator_script(tmp_path, "chop.py", """
            import argparse, os
            from scipy.io import wavfile
            p = argparse.ArgumentParser()
            p.add_argument("--input", required=True)
            p.add_argument("--outdir", required=True)
            p.add_argument("--num-speakers", type=int, default=2)
            a = p.parse_args()
            sr, x = wavfile.read(a.input)
            for i in range(1, a.num_speakers + 1):
                wavfile.write(os.path.join(a.outdir, f"est{i}.wav"), sr, x[:-500])
        """)
        d = SeparatorDescriptor(kind="external", command_template=cmd)
        with pytest.raises(SeparatorError, match="7500 samples"):
            separate_external(d, mixture, work_root=tmp_path)

    def test_timeout(self, mixture, tmp_path):
        cmd = write_separator_script(tmp_path, "sleep.py", """
            import time
            time.sleep(30)
        """)
        d = SeparatorDescriptor(kind="external", command_template=cmd, timeout_s=1.0)
        with pytest.raises(SeparatorError, match="timed out"):
            separate_external(d, mixture, work_root=tmp_path)

    def test_unlaunchable_command(self, mixture, tmp_path):
        d = SeparatorDescriptor(
            kind="external",
            command_template="/no/such/binary --input {input} --outdir {outdir}",
        )
        with pytest.raises(SeparatorError, match="launch"):
            separate_external(d, mixture, work_root=tmp_path)

    def test_wrong_kind_rejected(self, mixture):
        d = SeparatorDescriptor(kind="identity_split")
        with pytest.raises(ValueError, match="external"):
            separate_external(d, mixture)


class TestDispatch:
    def test_oracle_requires_sources(self):
        tone = synth_tone(HarmonicToneSpec(f0_hz=117.0, duration_s=0.2), SR)
        with pytest.raises(ValueError, match="true sources"):
            run_separator(SeparatorDescriptor(kind="irm_oracle"), tone)

    def test_descriptor_id_wins(self, alternating):
        mixture, sources = alternating
        d = SeparatorDescriptor(kind="ibm_oracle", separator_id="ibm_w64")
        res = run_separator(d, mixture, sources)
        assert res.separator_id == "ibm_w64"
