from __future__ import annotations

import math

import numpy as np
import pytest

from sepprobe.analysis import assignment_stats, estimate_f0
from sepprobe.core import Waveform
from sepprobe.metrics import SeparationResult
from sepprobe.stimulus import HarmonicToneSpec, synth_tone

SR = 8000


def sine(freq_hz: float, duration_s: float = 1.0, amp: float = 0.5) -> Waveform:
    t = np.arange(int(duration_s * SR)) / SR
    return Waveform(amp * np.sin(2 * np.pi * freq_hz * t), SR)


class TestEstimateF0:
    def test_pure_sine_sweep_within_1hz(self):
        for f0 in range(90, 401, 10):
            track = estimate_f0(sine(f0))
            assert np.all(track.voiced)
            assert track.mean_f0_hz == pytest.approx(f0, abs=1.0)

    def test_harmonic_stack_within_1hz(self):
        for f0 in (90.0, 117.0, 201.0, 333.0, 395.0):
            tone = synth_tone(HarmonicToneSpec(f0, (1, 2, 3), 1.0), SR)
            track = estimate_f0(tone)
            assert track.mean_f0_hz == pytest.approx(f0, abs=1.0)

    def test_integer_period_tones_exact(self):
        # 8000 / f0 is a whole number of samples for these, so the peak
        # needs no sub-sample correction and the estimate is exact
        for f0 in (100.0, 125.0, 160.0, 200.0, 250.0, 320.0, 400.0):
            assert estimate_f0(sine(f0)).mean_f0_hz == f0

    def test_silence_unvoiced(self):
        track = estimate_f0(Waveform(np.zeros(SR), SR))
        assert not np.any(track.voiced)
        assert track.mean_f0_hz is None

    def test_below_level_gate_unvoiced(self):
        # -45 dBFS gate: an rms of 1e-4 is far below it
        quiet = Waveform(sine(117).samples * 2e-4, SR)
        assert not np.any(estimate_f0(quiet).voiced)

    def test_noise_mostly_unvoiced(self):
        rng = np.random.default_rng(3)
        track = estimate_f0(Waveform(rng.standard_normal(SR) * 0.3, SR))
        assert np.mean(track.voiced) < 0.3

    def test_scale_invariant_above_gate(self):
        base = estimate_f0(sine(117))
        for alpha in (0.1, 0.25, 0.5, 1.0):
            scaled = estimate_f0(Waveform(sine(117).samples * alpha, SR))
            assert np.array_equal(scaled.voiced, base.voiced)
            np.testing.assert_allclose(
                scaled.f0_hz[scaled.voiced], base.f0_hz[base.voiced], atol=1e-6
            )

    def test_power_of_two_scale_exact(self):
        base = estimate_f0(sine(117))
        half = estimate_f0(Waveform(sine(117).samples * 0.5, SR))
        assert np.array_equal(base.f0_hz[base.voiced], half.f0_hz[half.voiced])

    def test_search_range_above_nyquist_rejected(self):
        with pytest.raises(ValueError, match="Nyquist"):
            estimate_f0(sine(100), search_hz=(60.0, 5000.0))

    def test_frame_too_short_for_range_rejected(self):
        with pytest.raises(ValueError, match="frame"):
            estimate_f0(sine(100), frame_ms=12.0)

    def test_mean_of_mixed_voicing(self):
        # half tone, half silence: mean over voiced frames only
        x = np.concatenate([sine(200, 0.5).samples, np.zeros(SR // 2)])
        track = estimate_f0(Waveform(x, SR))
        assert track.mean_f0_hz == pytest.approx(200.0, abs=0.5)
        assert 0 < track.voiced.sum() < len(track.f0_hz)


class TestAssignmentStats:
    def low_high_pair(self, f_lo: float, f_hi: float) -> SeparationResult:
        return SeparationResult((sine(f_lo), sine(f_hi)), "t")

    def test_exact_octave_ratio(self):
        stats = assignment_stats([self.low_high_pair(100, 200)])
        assert stats.log2_ratios[0] == 1.0

    def test_frac_low_to_ch1_on_ordered_set(self):
        results = [self.low_high_pair(lo, hi) for lo, hi in
                   [(100, 200), (90, 180), (117, 201), (150, 300), (80, 320)]]
        stats = assignment_stats(results)
        assert stats.frac_low_to_ch1 == 1.0
        assert all(r > 0 for r in stats.log2_ratios)

    def test_swapping_channels_negates(self):
        results = [self.low_high_pair(lo, hi) for lo, hi in
                   [(100, 200), (117, 201), (150, 300)]]
        stats = assignment_stats(results)
        flipped = assignment_stats(
            [SeparationResult((r.estimates[1], r.estimates[0]), "t") for r in results]
        )
        np.testing.assert_allclose(
            np.array(flipped.log2_ratios), -np.array(stats.log2_ratios), atol=1e-12
        )
        assert flipped.frac_low_to_ch1 == 1.0 - stats.frac_low_to_ch1

    def test_histogram_integrates_to_one(self):
        results = [self.low_high_pair(lo, hi) for lo, hi in
                   [(100, 200), (90, 360), (117, 201), (300, 301)]]
        stats = assignment_stats(results)
        integral = np.sum(stats.histogram_density) * 0.1
        assert integral == pytest.approx(1.0, abs=1e-9)
        assert len(stats.histogram_density) == 40
        assert stats.histogram_edges[0] == -2.0
        assert stats.histogram_edges[-1] == 2.0

    def test_out_of_range_ratio_clamped_not_dropped(self):
        # 65 vs 390 Hz is log2(6) = 2.58, past the +2 edge
        stats = assignment_stats([self.low_high_pair(65, 390)])
        assert stats.n_included == 1
        integral = np.sum(stats.histogram_density) * 0.1
        assert integral == pytest.approx(1.0, abs=1e-9)

    def test_unvoiced_channel_excluded_and_counted(self):
        good = self.low_high_pair(100, 200)
        bad = SeparationResult((sine(100), Waveform(np.zeros(SR), SR)), "t")
        stats = assignment_stats([good, bad])
        assert stats.n_included == 1
        assert stats.n_excluded == 1

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            assignment_stats([])

    def test_three_channel_result_rejected(self):
        result = SeparationResult((sine(100), sine(200), sine(300)), "t")
        with pytest.raises(ValueError, match="2 channels"):
            assignment_stats([result])
