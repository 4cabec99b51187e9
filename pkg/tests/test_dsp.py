import math

import numpy as np
import pytest

from ecgmon import dsp
from ecgmon.classifier import ClassLabel
from ecgmon.signal_source import SynthProfile, render_beats, synth

# reference coefficients for butter(2, [0.05, 0.15], btype="band"),
# generated once from an established filter-design implementation
ORACLE_B = [0.02008336556421124, 0.0, -0.04016673112842248, 0.0,
            0.02008336556421124]
ORACLE_A = [1.0, -3.428945454184877, 4.530250901890307, -2.7382519575216273,
            0.641351538057563]


def response_db(coeffs, f, fs):
    z = np.exp(1j * 2 * np.pi * f / fs)
    h = np.polyval(coeffs.b, z) / np.polyval(coeffs.a, z)
    return 20 * np.log10(np.abs(h))


class TestDesignBandpass:
    def test_matches_frozen_reference(self):
        c = dsp.design_bandpass(dsp.FilterSpec(2, 5, 15, 200))
        assert np.max(np.abs(c.b - ORACLE_B)) < 1e-9
        assert np.max(np.abs(c.a - ORACLE_A)) < 1e-9

    def test_normalization_uses_nyquist(self):
        # same normalized cutoffs => identical coefficients
        c1 = dsp.design_bandpass(dsp.FilterSpec(2, 5, 15, 50))
        c2 = dsp.design_bandpass(dsp.FilterSpec(2, 10, 30, 100))
        assert np.allclose(c1.b, c2.b, atol=1e-12)
        assert np.allclose(c1.a, c2.a, atol=1e-12)

    def test_degenerate_cutoffs_rejected(self):
        with pytest.raises(ValueError):
            dsp.design_bandpass(dsp.FilterSpec(2, 15, 5, 200))
        with pytest.raises(ValueError):
            dsp.design_bandpass(dsp.FilterSpec(2, 5, 120, 200))

    def test_minus_3db_at_cutoffs_random_specs(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            fs = rng.uniform(100, 1000)
            low = rng.uniform(0.01, 0.15) * fs
            high = low * rng.uniform(1.5, 4.0)
            high = min(high, 0.42 * fs)
            order = int(rng.integers(1, 9))
            spec = dsp.FilterSpec(order, low, high, fs)
            c = dsp.design_bandpass(spec)
            assert abs(response_db(c, low, fs) + 3.0) < 0.5, spec
            assert abs(response_db(c, high, fs) + 3.0) < 0.5, spec

    def test_stability_over_supported_range(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            fs = 360.0
            low = rng.uniform(0.005, 0.2) * fs
            high = low + rng.uniform(0.02, 0.2) * fs
            high = min(high, 0.44 * fs)
            order = int(rng.integers(1, 9))
            c = dsp.design_bandpass(dsp.FilterSpec(order, low, high, fs))
            assert np.max(np.abs(np.roots(c.a))) < 1.0


class TestFiltfilt:
    def setup_method(self):
        self.coeffs = dsp.design_bandpass(dsp.FilterSpec(2, 5, 15, 200))

    def test_zero_in_zero_out(self):
        y = dsp.filtfilt(self.coeffs, np.zeros(500))
        assert np.allclose(y, 0.0)

    def test_passband_sinusoid_amplitude_and_phase(self):
        fs = 200
        t = np.arange(0, 4, 1 / fs)
        y = dsp.filtfilt(self.coeffs, np.sin(2 * np.pi * 10 * t))
        basis = np.column_stack(
            [np.sin(2 * np.pi * 10 * t), np.cos(2 * np.pi * 10 * t)]
        )
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        amplitude = float(np.hypot(*coef))
        phase_deg = math.degrees(math.atan2(coef[1], coef[0]))
        assert abs(amplitude - 1.0) < 0.02
        assert abs(phase_deg) < 1.0

    def test_drift_removal_keeps_passband_component(self):
        fs = 200
        t = np.arange(0, 10, 1 / fs)
        clean = np.sin(2 * np.pi * 10 * t)
        drift = 5.0 * np.sin(2 * np.pi * 0.1 * t)
        y = dsp.filtfilt(self.coeffs, clean + drift)
        corr = np.corrcoef(y, clean)[0, 1]
        assert corr >= 0.99

    def test_time_reversal_symmetry(self):
        # zero-phase symmetry holds once edge transients (decaying at the
        # slowest pole radius, 0.935 here) die out: 300 samples < 1e-9
        rng = np.random.default_rng(3)
        x = rng.normal(size=1500)
        fwd = dsp.filtfilt(self.coeffs, x)
        rev = dsp.filtfilt(self.coeffs, x[::-1])[::-1]
        assert np.max(np.abs(fwd[300:-300] - rev[300:-300])) < 1e-9

    def test_input_too_short(self):
        with pytest.raises(dsp.InputTooShort):
            dsp.filtfilt(self.coeffs, np.zeros(12))

    def test_output_length_preserved(self):
        y = dsp.filtfilt(self.coeffs, np.random.default_rng(0).normal(size=321))
        assert len(y) == 321


class TestPanTompkins:
    def test_reference_train_exact_positions(self):
        fs = 200
        positions = list(range(100, 5901, 200))
        x = render_beats(positions, [ClassLabel.N] * len(positions), 6000, fs)
        peaks = dsp.pan_tompkins(x, fs)
        assert len(peaks) == len(positions)
        assert all(abs(p - q) <= 2 for p, q in zip(peaks, positions))

    def test_flat_zero_signal_yields_nothing(self):
        assert dsp.pan_tompkins(np.zeros(2000), 200) == []

    def test_peak_count_matches_duration(self):
        w = synth(SynthProfile(bpm=60, seed=11), 60, 360)
        peaks = dsp.pan_tompkins(w.samples, 360)
        assert abs(len(peaks) - 60) <= 1

    def test_refractory_spacing(self):
        w = synth(SynthProfile(bpm=150, seed=2), 30, 360)
        peaks = dsp.pan_tompkins(w.samples, 360)
        assert all(b - a >= 0.2 * 360 for a, b in zip(peaks, peaks[1:]))

    def test_truth_alignment_within_two_samples(self):
        for fs in (360.0, 50.0):
            w = synth(SynthProfile(bpm=72, seed=9), 30, fs)
            peaks = dsp.pan_tompkins(w.samples, fs)
            assert len(peaks) == len(w.truth_peaks)
            assert all(abs(p - q) <= 2 for p, q in zip(peaks, w.truth_peaks))


def brute_force_stats(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    ordered = sorted(values)
    if n % 2:
        median = ordered[n // 2]
    else:
        median = (ordered[n // 2 - 1] + ordered[n // 2]) / 2
    return mean, math.sqrt(var), median, min(values), max(values)


class TestBasicStats:
    def test_constant_vector(self):
        r = dsp.basic_stats([3.5] * 10)
        assert (r.mean, r.std, r.median, r.min, r.max) == (3.5, 0.0, 3.5, 3.5, 3.5)

    def test_hand_computed(self):
        r = dsp.basic_stats([1, 2, 3, 4])
        assert r.mean == 2.5
        assert abs(r.std - math.sqrt(1.25)) < 1e-15
        assert r.median == 2.5
        assert (r.min, r.max) == (1.0, 4.0)

    def test_against_brute_force(self):
        rng = np.random.default_rng(17)
        x = rng.normal(2.0, 5.0, 1000)
        r = dsp.basic_stats(x)
        mean, std, median, lo, hi = brute_force_stats(list(x))
        assert abs(r.mean - mean) <= 1e-12 * abs(mean)
        assert abs(r.std - std) <= 1e-12 * std
        assert abs(r.median - median) <= 1e-12 * abs(median)
        assert r.min == lo and r.max == hi

    def test_empty_input(self):
        with pytest.raises(dsp.EmptyInput):
            dsp.basic_stats([])


def brute_force_top_k(x, fs, k):
    n = len(x)
    mags = []
    for bin_idx in range(1, n // 2 + 1):
        re = sum(x[t] * math.cos(2 * math.pi * bin_idx * t / n) for t in range(n))
        im = sum(x[t] * math.sin(2 * math.pi * bin_idx * t / n) for t in range(n))
        mags.append((math.hypot(re, im), bin_idx * fs / n))
    mags.sort(key=lambda p: (-p[0], p[1]))
    return sorted(f for _, f in mags[:k])


class TestDominantFrequencies:
    def test_three_tone_mixture(self):
        fs, dur = 50, 10
        t = np.arange(0, dur, 1 / fs)
        x = sum(np.sin(2 * np.pi * f * t) for f in (1, 3, 5))
        assert dsp.dominant_frequencies(x, fs, 3) == [1.0, 3.0, 5.0]

    def test_single_tone(self):
        t = np.arange(0, 5, 1 / 40)
        x = np.sin(2 * np.pi * 2 * t)
        assert dsp.dominant_frequencies(x, 40, 1) == [2.0]

    def test_white_noise_matches_brute_force(self):
        rng = np.random.default_rng(23)
        x = rng.normal(size=200)
        got = dsp.dominant_frequencies(x, 100, 3)
        want = brute_force_top_k(list(x), 100, 3)
        assert np.allclose(got, want)

    def test_empty_input(self):
        with pytest.raises(dsp.EmptyInput):
            dsp.dominant_frequencies([1.0], 10, 1)


class TestHrv:
    def test_exact_spacing(self):
        fs = 360
        peaks = [int(round(i * 0.85 * fs)) for i in range(10)]
        # 0.85 s does not land on an integer sample at 360 Hz; use 200 Hz
        fs = 200
        peaks = [i * 170 for i in range(10)]
        r = dsp.hrv(peaks, fs)
        assert r.mean_rr == pytest.approx(0.85, abs=1e-12)
        assert r.std_rr == pytest.approx(0.0, abs=1e-12)

    def test_two_peaks_single_interval(self):
        r = dsp.hrv([100, 300], 200)
        assert r.rr_intervals == [1.0]
        assert r.mean_rr == 1.0
        assert r.std_rr == 0.0

    def test_jittered_synthetic_mean(self):
        w = synth(SynthProfile(bpm=60, seed=31), 60, 360)
        r = dsp.hrv(w.truth_peaks, 360)
        assert abs(r.mean_rr - 1.0) < 0.02

    def test_too_few_peaks(self):
        with pytest.raises(dsp.TooFewPeaks):
            dsp.hrv([5], 100)
