import numpy as np
import pytest

from ecgmon import classifier as clf
from ecgmon.signal_source import SignalWindow, SynthProfile, labeled_corpus, synth


def random_segment(rng, label=None):
    return clf.BeatSegment(samples=rng.random(180), center_index=90,
                           label=label)


class TestSegmentBeats:
    def test_boundary_peak_fits_exactly(self):
        w = SignalWindow(samples=np.arange(180, dtype=float), fs=360.0)
        segs = clf.segment_beats(w, [90])
        assert len(segs) == 1
        assert np.array_equal(segs[0].samples, w.samples)

    def test_early_peak_skipped(self):
        w = SignalWindow(samples=np.zeros(400), fs=360.0)
        assert clf.segment_beats(w, [10]) == []

    def test_count_matches_interior_truth_peaks(self):
        w = synth(SynthProfile(bpm=60, seed=8), 60, 360)
        segs = clf.segment_beats(w, w.truth_peaks)
        interior = [p for p in w.truth_peaks
                    if 90 <= p <= len(w.samples) - 90]
        assert len(segs) == len(interior)
        assert all(s.label is not None for s in segs)


class TestNormalize:
    def test_ramp(self):
        seg = clf.BeatSegment(samples=np.arange(180, dtype=float),
                              center_index=90)
        out = clf.normalize(seg)
        assert out.samples[0] == 0.0 and out.samples[-1] == 1.0

    def test_flat_maps_to_half(self):
        seg = clf.BeatSegment(samples=np.full(180, 3.3), center_index=90)
        assert np.all(clf.normalize(seg).samples == 0.5)

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        seg = random_segment(rng)
        once = clf.normalize(seg)
        twice = clf.normalize(once)
        assert np.max(np.abs(once.samples - twice.samples)) < 1e-12


class TestModelBasics:
    def test_conv_output_length(self):
        m = clf.CnnModel(clf.Hyperparameters(n_filters=4, kernel_width=7))
        assert m.conv_out == 180 - 7 + 1

    def test_zero_weight_model_uniform_probabilities(self):
        m = clf.CnnModel(clf.Hyperparameters(seed=1)).zero_weights()
        rng = np.random.default_rng(2)
        _, probs = clf.predict(m, clf.normalize(random_segment(rng)))
        assert np.allclose(probs, 0.2, atol=1e-12)

    def test_probabilities_sum_to_one(self):
        m = clf.CnnModel(clf.Hyperparameters(seed=3))
        rng = np.random.default_rng(4)
        for _ in range(5):
            _, probs = clf.predict(m, clf.normalize(random_segment(rng)))
            assert abs(probs.sum() - 1.0) < 1e-9

    def test_unnormalized_input_rejected(self):
        m = clf.CnnModel(clf.Hyperparameters(seed=3))
        seg = clf.BeatSegment(samples=np.linspace(-2, 5, 180), center_index=90)
        with pytest.raises(clf.UnnormalizedInput):
            clf.predict(m, seg)


class TestGradients:
    def test_grad_check_random_models(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            hp = clf.Hyperparameters(
                n_filters=int(rng.integers(2, 5)),
                kernel_width=int(rng.integers(3, 9)),
                hidden=int(rng.integers(4, 10)),
                seed=int(rng.integers(1 << 20)),
            )
            m = clf.CnnModel(hp)
            seg = clf.normalize(
                random_segment(rng, clf.CLASS_ORDER[int(rng.integers(5))])
            )
            assert clf.grad_check(m, seg) <= 1e-4

    def test_output_layer_gradient_closed_form(self):
        # zero weights: softmax = uniform, d loss/d logits = p - y
        m = clf.CnnModel(clf.Hyperparameters(seed=5)).zero_weights()
        rng = np.random.default_rng(6)
        seg = clf.normalize(random_segment(rng, clf.ClassLabel.A))
        x = seg.samples[None, :]
        y = clf._one_hot([seg.label])
        probs, cache = m._forward(x, None)
        grads = m._backward(x, probs, y, cache, None)
        expected = probs[0] - y[0]
        assert np.max(np.abs(grads[-1] - expected)) < 1e-6

    def test_gradient_linearity_in_loss_scale(self):
        m = clf.CnnModel(clf.Hyperparameters(seed=7))
        rng = np.random.default_rng(8)
        seg = clf.normalize(random_segment(rng, clf.ClassLabel.V))
        x = seg.samples[None, :]
        y = clf._one_hot([seg.label])
        probs, cache = m._forward(x, None)
        g1 = m._backward(x, probs, y, cache, None)
        # scaling the target scales the cross-entropy loss linearly
        probs2, cache2 = m._forward(x, None)
        g2 = m._backward(x, probs2 * 2.0, y * 2.0, cache2, None)
        for a, b in zip(g1, g2):
            nz = np.abs(b) > 1e-12
            assert np.allclose(2.0 * a[nz], b[nz], rtol=1e-9)


@pytest.fixture(scope="module")
def corpus():
    return labeled_corpus(200, seed=42)


@pytest.fixture(scope="module")
def trained(corpus):
    m = clf.CnnModel(clf.Hyperparameters(seed=7))
    history = clf.train(m, corpus, epochs=10, batch=32)
    return m, history


class TestTraining:
    def test_reaches_high_validation_accuracy(self, trained):
        _, history = trained
        assert history[-1].val_accuracy >= 0.95

    def test_loss_non_increasing_with_one_transient(self, trained):
        _, history = trained
        losses = [h.train_loss for h in history]
        increases = sum(1 for a, b in zip(losses, losses[1:]) if b > a)
        assert increases <= 1

    def test_fixed_seed_bit_identical(self, corpus):
        m1 = clf.CnnModel(clf.Hyperparameters(seed=9))
        m2 = clf.CnnModel(clf.Hyperparameters(seed=9))
        h1 = clf.train(m1, corpus, epochs=3, batch=32)
        h2 = clf.train(m2, corpus, epochs=3, batch=32)
        assert [h.train_loss for h in h1] == [h.train_loss for h in h2]
        for a, b in zip(m1.parameters(), m2.parameters()):
            assert np.array_equal(a, b)

    def test_single_class_rejected(self):
        w = synth(SynthProfile(bpm=70, class_mix={clf.ClassLabel.N: 1.0}), 30, 360)
        segs = [clf.normalize(s) for s in clf.segment_beats(w, w.truth_peaks)]
        m = clf.CnnModel(clf.Hyperparameters(seed=1))
        with pytest.raises(clf.ClassMissing):
            clf.train(m, segs)

    def test_trained_model_classifies_clean_templates(self, trained):
        m, _ = trained
        w = synth(SynthProfile(bpm=70, class_mix={clf.ClassLabel.V: 1.0},
                               seed=99), 20, 360)
        segs = clf.segment_beats(w, w.truth_peaks)
        label, _ = clf.predict(m, clf.normalize(segs[3]))
        assert label is clf.ClassLabel.V


class TestSerialization:
    def test_model_round_trip_bit_exact(self, tmp_path):
        m = clf.CnnModel(clf.Hyperparameters(seed=13))
        path = tmp_path / "model.bin"
        clf.save_model(m, path)
        loaded = clf.load_model(path)
        assert loaded.hp == m.hp
        for a, b in zip(m.parameters(), loaded.parameters()):
            assert np.array_equal(a, b)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"nope")
        with pytest.raises(ValueError):
            clf.load_model(path)

    def test_corpus_csv_round_trip(self, tmp_path):
        corpus = labeled_corpus(3, seed=5)
        path = tmp_path / "corpus.csv"
        clf.save_corpus_csv(corpus, path)
        loaded = clf.load_corpus_csv(path)
        assert len(loaded) == len(corpus)
        assert loaded[0].label == corpus[0].label
        assert np.allclose(loaded[0].samples, corpus[0].samples, atol=1e-8)
