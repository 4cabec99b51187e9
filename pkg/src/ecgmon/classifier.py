"""Beat segmentation, normalization, and a small 1-D conv net.

Five beat classes are supported: normal (N), left and right bundle branch
block (L, R), atrial premature (A), and ventricular premature (V).
Segments are 180 samples centered on an R-peak and min-max normalized.

The network is one conv layer (ReLU), dropout, a ReLU hidden dense layer,
and a 5-way softmax output, trained with plain mini-batch SGD on
cross-entropy.  Backpropagation is hand-written and checked against
central finite differences (grad_check).
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field

import numpy as np

SEGMENT_LEN = 180
HALF_SEGMENT = SEGMENT_LEN // 2


class ClassLabel(enum.Enum):
    N = "N"
    L = "L"
    R = "R"
    A = "A"
    V = "V"


CLASS_ORDER = [ClassLabel.N, ClassLabel.L, ClassLabel.R, ClassLabel.A, ClassLabel.V]
_CLASS_INDEX = {c: i for i, c in enumerate(CLASS_ORDER)}


class ClassMissing(ValueError):
    """Training data lacks at least one of the five classes."""


class UnnormalizedInput(ValueError):
    """Segment violates the min=0/max=1 contract beyond tolerance."""


@dataclass(frozen=True)
class BeatSegment:
    samples: np.ndarray  # length 180
    center_index: int
    label: ClassLabel | None = None

    def __post_init__(self):
        if len(self.samples) != SEGMENT_LEN:
            raise ValueError(f"segment must be {SEGMENT_LEN} samples")


def segment_beats(window, peaks) -> list[BeatSegment]:
    """One segment per peak whose 90-before/90-after window fits.

    Peaks too close to either edge are skipped; the skip count is
    len(peaks) - len(result).  Labels are copied from the window's ground
    truth when the peak matches a truth peak exactly.
    """
    samples = np.asarray(window.samples, dtype=float)
    truth = {}
    if getattr(window, "truth_peaks", None) and getattr(window, "truth_labels", None):
        truth = dict(zip(window.truth_peaks, window.truth_labels))
    out = []
    for p in peaks:
        lo = p - HALF_SEGMENT
        hi = p + HALF_SEGMENT
        if lo < 0 or hi > len(samples):
            continue
        out.append(
            BeatSegment(
                samples=samples[lo:hi].copy(),
                center_index=int(p),
                label=truth.get(p),
            )
        )
    return out


def normalize(segment: BeatSegment) -> BeatSegment:
    """Min-max scale to [0, 1]; a flat segment maps to all 0.5."""
    s = segment.samples
    lo, hi = float(np.min(s)), float(np.max(s))
    if hi == lo:
        scaled = np.full_like(s, 0.5)
    else:
        scaled = (s - lo) / (hi - lo)
    return BeatSegment(samples=scaled, center_index=segment.center_index,
                       label=segment.label)


def _check_normalized(s: np.ndarray) -> None:
    flat = np.allclose(s, 0.5, atol=1e-6)
    if flat:
        return
    if abs(float(np.min(s))) > 1e-6 or abs(float(np.max(s)) - 1.0) > 1e-6:
        raise UnnormalizedInput(
            f"segment min/max = ({np.min(s):.3g}, {np.max(s):.3g})"
        )


@dataclass
class Hyperparameters:
    n_filters: int = 16
    kernel_width: int = 7
    hidden: int = 32
    learning_rate: float = 0.01
    dropout_rate: float = 0.3
    seed: int = 0


@dataclass
class CnnModel:
    """conv(F kernels of width W) -> ReLU -> dropout -> dense -> ReLU -> dense(5)."""

    hp: Hyperparameters
    conv_w: np.ndarray = field(init=False)  # (W, F)
    conv_b: np.ndarray = field(init=False)  # (F,)
    dense1_w: np.ndarray = field(init=False)  # (conv_out*F, hidden)
    dense1_b: np.ndarray = field(init=False)
    out_w: np.ndarray = field(init=False)  # (hidden, 5)
    out_b: np.ndarray = field(init=False)

    def __post_init__(self):
        hp = self.hp
        self.conv_out = SEGMENT_LEN - hp.kernel_width + 1
        rng = np.random.default_rng(hp.seed)
        # He-style scaling keeps early ReLU activations in range
        self.conv_w = rng.normal(0, np.sqrt(2.0 / hp.kernel_width),
                                 (hp.kernel_width, hp.n_filters))
        self.conv_b = np.zeros(hp.n_filters)
        flat = self.conv_out * hp.n_filters
        self.dense1_w = rng.normal(0, np.sqrt(2.0 / flat), (flat, hp.hidden))
        self.dense1_b = np.zeros(hp.hidden)
        self.out_w = rng.normal(0, np.sqrt(2.0 / hp.hidden), (hp.hidden, 5))
        self.out_b = np.zeros(5)

    def parameters(self) -> list[np.ndarray]:
        return [self.conv_w, self.conv_b, self.dense1_w, self.dense1_b,
                self.out_w, self.out_b]

    def zero_weights(self) -> "CnnModel":
        for p in self.parameters():
            p[...] = 0.0
        return self

    # -- forward / backward ------------------------------------------------

    def _forward(self, batch: np.ndarray, dropout_mask: np.ndarray | None):
        """batch: (B, 180).  Returns (probs, cache for backprop)."""
        windows = np.lib.stride_tricks.sliding_window_view(
            batch, self.hp.kernel_width, axis=1
        )  # (B, conv_out, W)
        conv_z = windows @ self.conv_w + self.conv_b  # (B, conv_out, F)
        conv_a = np.maximum(conv_z, 0.0)
        flat = conv_a.reshape(batch.shape[0], -1)
        if dropout_mask is not None:
            flat = flat * dropout_mask
        h_z = flat @ self.dense1_w + self.dense1_b
        h_a = np.maximum(h_z, 0.0)
        logits = h_a @ self.out_w + self.out_b
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        return probs, (windows, conv_z, flat, h_z, h_a)

    def _backward(self, batch, probs, targets, cache, dropout_mask):
        """Cross-entropy gradient w.r.t. every parameter (mean over batch)."""
        windows, conv_z, flat, h_z, h_a = cache
        B = batch.shape[0]
        d_logits = (probs - targets) / B  # (B, 5)
        g_out_w = h_a.T @ d_logits
        g_out_b = d_logits.sum(axis=0)
        d_h = (d_logits @ self.out_w.T) * (h_z > 0.0)
        g_d1_w = flat.T @ d_h
        g_d1_b = d_h.sum(axis=0)
        d_flat = d_h @ self.dense1_w.T
        if dropout_mask is not None:
            d_flat = d_flat * dropout_mask
        d_conv = d_flat.reshape(B, self.conv_out, self.hp.n_filters)
        d_conv = d_conv * (conv_z > 0.0)
        g_conv_w = np.einsum("bow,bof->wf", windows, d_conv)
        g_conv_b = d_conv.sum(axis=(0, 1))
        return [g_conv_w, g_conv_b, g_d1_w, g_d1_b, g_out_w, g_out_b]

    def loss(self, batch, targets, dropout_mask=None) -> float:
        probs, _ = self._forward(batch, dropout_mask)
        eps = 1e-12
        return float(-np.mean(np.sum(targets * np.log(probs + eps), axis=1)))


def _one_hot(labels: list[ClassLabel]) -> np.ndarray:
    y = np.zeros((len(labels), 5))
    for i, lab in enumerate(labels):
        y[i, _CLASS_INDEX[lab]] = 1.0
    return y


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_accuracy: float


def train(model: CnnModel, dataset: list[BeatSegment], epochs: int = 10,
          batch: int = 32, val_split: float = 0.2) -> list[EpochStats]:
    """Mini-batch SGD on cross-entropy with a stratified held-out split.

    Mutates the model in place; returns per-epoch loss/accuracy history.
    Fully deterministic for a fixed model seed.
    """
    labeled = [s for s in dataset if s.label is not None]
    by_class: dict[ClassLabel, list[BeatSegment]] = {c: [] for c in CLASS_ORDER}
    for s in labeled:
        by_class[s.label].append(s)
    missing = [c.value for c in CLASS_ORDER if len(by_class[c]) < 2]
    if missing:
        raise ClassMissing(f"classes missing or underrepresented: {missing}")

    rng = np.random.default_rng(model.hp.seed + 1)
    train_set: list[BeatSegment] = []
    val_set: list[BeatSegment] = []
    for c in CLASS_ORDER:
        group = by_class[c]
        idx = rng.permutation(len(group))
        n_val = max(1, int(round(val_split * len(group))))
        for j in idx[:n_val]:
            val_set.append(group[j])
        for j in idx[n_val:]:
            train_set.append(group[j])

    x_train = np.stack([s.samples for s in train_set])
    y_train = _one_hot([s.label for s in train_set])
    x_val = np.stack([s.samples for s in val_set])
    y_val = np.array([_CLASS_INDEX[s.label] for s in val_set])

    lr = model.hp.learning_rate
    keep = 1.0 - model.hp.dropout_rate
    flat_dim = model.conv_out * model.hp.n_filters
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(x_train))
        losses = []
        for start in range(0, len(order), batch):
            sel = order[start : start + batch]
            xb, yb = x_train[sel], y_train[sel]
            # inverted dropout: scale at train time, identity at inference
            mask = (rng.random((len(sel), flat_dim)) < keep) / keep
            probs, cache = model._forward(xb, mask)
            grads = model._backward(xb, probs, yb, cache, mask)
            eps = 1e-12
            losses.append(float(-np.mean(np.sum(yb * np.log(probs + eps), axis=1))))
            for p, g in zip(model.parameters(), grads):
                p -= lr * g
        val_probs, _ = model._forward(x_val, None)
        val_acc = float(np.mean(np.argmax(val_probs, axis=1) == y_val))
        history.append(EpochStats(epoch, float(np.mean(losses)), val_acc))
    return history


def predict(model: CnnModel, segment: BeatSegment) -> tuple[ClassLabel, np.ndarray]:
    """Argmax class and softmax probabilities; dropout disabled."""
    _check_normalized(segment.samples)
    probs, _ = model._forward(segment.samples[None, :], None)
    probs = probs[0]
    return CLASS_ORDER[int(np.argmax(probs))], probs


def grad_check(model: CnnModel, sample: BeatSegment, step: float = 1e-5) -> float:
    """Max relative error of analytic vs central-difference gradients."""
    if sample.label is None:
        raise ValueError("grad_check needs a labeled segment")
    x = sample.samples[None, :]
    y = _one_hot([sample.label])
    probs, cache = model._forward(x, None)
    grads = model._backward(x, probs, y, cache, None)
    worst = 0.0
    for p, g in zip(model.parameters(), grads):
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            hi = model.loss(x, y)
            flat_p[i] = orig - step
            lo = model.loss(x, y)
            flat_p[i] = orig
            numeric = (hi - lo) / (2 * step)
            denom = max(abs(numeric), abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


# -- serialization -----------------------------------------------------------

_MAGIC = b"ECGM"
_FORMAT_VERSION = 1


def save_model(model: CnnModel, path) -> None:
    """Flat binary: magic, version, hyperparameters, float64 LE parameters."""
    hp = model.hp
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<BIIIddI", _FORMAT_VERSION, hp.n_filters,
                            hp.kernel_width, hp.hidden, hp.learning_rate,
                            hp.dropout_rate, hp.seed))
        for p in model.parameters():
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> CnnModel:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError("not a model file")
        version, nf, kw, hidden, lr, dr, seed = struct.unpack(
            "<BIIIddI", f.read(struct.calcsize("<BIIIddI"))
        )
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported model version {version}")
        model = CnnModel(Hyperparameters(nf, kw, hidden, lr, dr, seed))
        for p in model.parameters():
            raw = f.read(p.size * 8)
            p[...] = np.frombuffer(raw, dtype="<f8").reshape(p.shape)
    return model


def load_corpus_csv(path) -> list[BeatSegment]:
    """One row = 180 sample values followed by a class letter."""
    out = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            values = np.array([float(v) for v in row[:-1]])
            out.append(BeatSegment(samples=values, center_index=-1,
                                   label=ClassLabel(row[-1].strip())))
    return out


def save_corpus_csv(segments: list[BeatSegment], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for s in segments:
            if s.label is None:
                raise ValueError("corpus rows must be labeled")
            w.writerow([f"{v:.9g}" for v in s.samples] + [s.label.value])
