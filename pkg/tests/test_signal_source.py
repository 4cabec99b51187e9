import numpy as np
import pytest

from ecgmon import signal_source as ss
from ecgmon import wire_protocol as wp
from ecgmon.classifier import ClassLabel


class TestSynth:
    def test_exact_spacing_without_jitter(self):
        w = ss.synth(ss.SynthProfile(bpm=60, rr_jitter=0.0), 10, 50)
        assert set(np.diff(w.truth_peaks)) == {50}

    def test_single_class_mix(self):
        w = ss.synth(ss.SynthProfile(class_mix={ClassLabel.N: 1.0}), 10, 360)
        assert all(lab is ClassLabel.N for lab in w.truth_labels)

    def test_rr_085_mean_within_one_sample_period(self):
        # 0.85 s RR target (bpm ~70.6)
        w = ss.synth(ss.SynthProfile(bpm=60 / 0.85, seed=7), 60, 360)
        rr = np.diff(w.truth_peaks) / 360
        assert abs(rr.mean() - 0.85) <= 1 / 360

    def test_determinism(self):
        profile = ss.SynthProfile(bpm=75, noise_std=0.05, seed=12,
                                  class_mix={c: 0.2 for c in ClassLabel})
        w1 = ss.synth(profile, 20, 360)
        w2 = ss.synth(profile, 20, 360)
        assert np.array_equal(w1.samples, w2.samples)
        assert w1.truth_peaks == w2.truth_peaks
        assert w1.truth_labels == w2.truth_labels

    def test_invalid_profiles(self):
        with pytest.raises(ss.InvalidProfile):
            ss.synth(ss.SynthProfile(bpm=10), 5, 50)
        with pytest.raises(ss.InvalidProfile):
            ss.synth(ss.SynthProfile(class_mix={ClassLabel.N: 0.7}), 5, 50)

    def test_mixed_classes_have_distinct_templates(self):
        t = np.linspace(-0.4, 0.4, 289)
        shapes = [ss.beat_template(c, t) for c in ClassLabel]
        for i in range(len(shapes)):
            for j in range(i + 1, len(shapes)):
                assert np.max(np.abs(shapes[i] - shapes[j])) > 0.1


class TestCalibration:
    def test_default_maps_zero_to_0x40(self):
        raw = ss.DEFAULT_CALIBRATION.to_raw([0.0])
        assert raw[0] == 0x40

    def test_round_trip_quantized(self):
        cal = ss.DEFAULT_CALIBRATION
        amps = np.linspace(-0.6, 1.8, 100)
        amps = amps[(amps > -0.64) & (amps < 1.83)]
        raw = cal.to_raw(amps)
        back = cal.to_amplitude(raw)
        assert np.max(np.abs(back - amps)) <= cal.gain / 2 + 1e-12

    def test_overflow_raises(self):
        with pytest.raises(ss.QuantizationOverflow):
            ss.DEFAULT_CALIBRATION.to_raw([5.0])


class TestStreamer:
    def test_constant_zero_window_streams_0x40_runs(self):
        w = ss.SignalWindow(samples=np.zeros(50), fs=50.0)
        data = ss.stream_bytes(w, ss.StreamerConfig())
        events = wp.decode(data)
        waves = [e for e in events if e.kind is wp.FrameKind.WAVE_SAMPLES]
        assert waves and all(s == 0x40 for e in waves for s in e.samples)

    def test_round_trip_reconstruction_exact(self):
        cfg = ss.StreamerConfig()
        w = ss.synth(ss.SynthProfile(bpm=70, seed=4), 12, 50)
        data = ss.stream_bytes(w, cfg)
        recon = ss.reconstruct_wave(wp.decode(data), cfg.calibration)
        quantized = cfg.calibration.to_amplitude(cfg.calibration.to_raw(w.samples))
        assert np.array_equal(recon, quantized)

    def test_pulse_values_track_truth_bpm(self):
        w = ss.synth(ss.SynthProfile(bpm=60, seed=5), 30, 50)
        data = ss.stream_bytes(w, ss.StreamerConfig())
        pulses = [e.pulse_bpm for e in wp.decode(data)
                  if e.kind is wp.FrameKind.PULSE]
        settled = [p for p in pulses if p > 0][1:]
        assert settled and all(abs(p - 60) <= 2 for p in settled)

    def test_lead_off_injected_once_at_position(self):
        cfg = ss.StreamerConfig(lead_off_at_s=(2.0,))
        w = ss.synth(ss.SynthProfile(bpm=60, rr_jitter=0.0), 10, 50)
        data = ss.stream_bytes(w, cfg)
        assert data.count(bytes([wp.INFO_MARKER, wp.INFO_LEAD_OFF])) == 1
        samples_before = 0
        for ev in wp.decode(data):
            if ev.kind is wp.FrameKind.WAVE_SAMPLES:
                samples_before += len(ev.samples)
            elif ev.is_lead_off:
                break
        assert samples_before == 100  # 2 s at 50 Hz

    def test_accelerated_stream_to_collects_everything(self):
        w = ss.synth(ss.SynthProfile(bpm=60), 5, 50)
        cfg = ss.StreamerConfig(accelerated=True)
        sink = bytearray()
        total = ss.stream_to(w, cfg, sink.extend)
        assert total == len(sink)
        assert bytes(sink) == ss.stream_bytes(w, cfg)


class TestProfileFiles:
    def test_parse_round_trip(self):
        text = """
        # demo profile
        bpm = 72.5
        noise_std = 0.01
        baseline_wander_hz = 0.3
        seed = 9
        rr_jitter = 0.01
        class_mix = N:0.6, L:0.1, R:0.1, A:0.1, V:0.1
        """
        p = ss.parse_profile(text)
        assert p.bpm == 72.5
        assert p.seed == 9
        assert p.class_mix[ClassLabel.V] == pytest.approx(0.1)

    def test_unknown_key_rejected(self):
        with pytest.raises(ss.InvalidProfile):
            ss.parse_profile("bogus = 1")

    def test_bad_mix_rejected(self):
        with pytest.raises(ss.InvalidProfile):
            ss.parse_profile("class_mix = N:0.5")


class TestLabeledCorpus:
    def test_counts_and_normalization(self):
        corpus = ss.labeled_corpus(10, seed=1)
        assert len(corpus) == 50
        for seg in corpus:
            assert len(seg.samples) == 180
            assert seg.label is not None
            assert seg.samples.min() == pytest.approx(0.0, abs=1e-12)
            assert seg.samples.max() == pytest.approx(1.0, abs=1e-12)
