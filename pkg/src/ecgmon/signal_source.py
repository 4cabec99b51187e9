"""Patient-side signal production.

A template-based synthetic ECG generator with ground-truth R-peak
positions and class labels, plus a streamer that turns signal windows
into the marker-byte wire format (wave runs, periodic pulse bytes,
optional lead-off fault injection) in real or accelerated time.

Beat templates are sums of Gaussian bumps (P, Q, R, S, T).  The five
classes differ in QRS width, R amplitude, P-wave presence, and T
polarity, which keeps them morphologically separable after min-max
normalization:

    N  narrow QRS, normal P, upright T
    L  wide QRS, no Q, inverted T
    R  split R wave (R' bump), deep S
    A  narrow QRS with an early, peaked P
    V  very wide high-amplitude QRS, no P, deep inverted T
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from ecgmon.classifier import ClassLabel
from ecgmon import wire_protocol as wp


class InvalidProfile(ValueError):
    pass


class QuantizationOverflow(ValueError):
    """A calibrated sample maps outside the 0-247 wire range."""


@dataclass(frozen=True)
class SignalWindow:
    samples: np.ndarray
    fs: float
    t0_ms: int = 0
    truth_peaks: list[int] | None = None
    truth_labels: list[ClassLabel] | None = None

    def __post_init__(self):
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if self.truth_peaks is not None:
            pk = self.truth_peaks
            if any(b <= a for a, b in zip(pk, pk[1:])):
                raise ValueError("truth_peaks must be strictly increasing")
            if pk and (pk[0] < 0 or pk[-1] >= len(self.samples)):
                raise ValueError("truth_peaks outside window")
            if self.truth_labels is not None and len(self.truth_labels) != len(pk):
                raise ValueError("truth_labels length mismatch")


@dataclass(frozen=True)
class SynthProfile:
    bpm: float = 60.0
    class_mix: dict[ClassLabel, float] = None
    noise_std: float = 0.0
    baseline_wander_hz: float = 0.0
    seed: int = 0
    rr_jitter: float = 0.02  # fraction of RR, uniform, <= 2 %

    def __post_init__(self):
        if self.class_mix is None:
            object.__setattr__(self, "class_mix", {ClassLabel.N: 1.0})

    def validate(self) -> None:
        if not 20.0 <= self.bpm <= 300.0:
            raise InvalidProfile(f"bpm {self.bpm} outside [20, 300]")
        total = sum(self.class_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidProfile(f"class_mix sums to {total}, not 1")
        if any(p < 0 for p in self.class_mix.values()):
            raise InvalidProfile("negative class probability")
        if not 0.0 <= self.rr_jitter <= 0.02:
            raise InvalidProfile("rr_jitter must be within [0, 0.02]")


# (center s, std s, amplitude) bumps per class; R is always the strict max
_TEMPLATES: dict[ClassLabel, list[tuple[float, float, float]]] = {
    ClassLabel.N: [(-0.16, 0.020, 0.12), (-0.035, 0.008, -0.10),
                   (0.0, 0.012, 1.00), (0.035, 0.008, -0.15),
                   (0.24, 0.050, 0.30)],
    ClassLabel.L: [(-0.16, 0.020, 0.12), (0.0, 0.030, 0.85),
                   (0.055, 0.020, -0.08), (0.26, 0.055, -0.18)],
    ClassLabel.R: [(-0.16, 0.020, 0.12), (-0.035, 0.008, -0.08),
                   (0.0, 0.013, 0.90), (0.045, 0.015, 0.50),
                   (0.085, 0.010, -0.20), (0.24, 0.050, 0.22)],
    ClassLabel.A: [(-0.11, 0.012, 0.25), (-0.035, 0.008, -0.10),
                   (0.0, 0.012, 0.95), (0.035, 0.008, -0.14),
                   (0.24, 0.050, 0.28)],
    ClassLabel.V: [(0.0, 0.045, 1.20), (0.07, 0.025, -0.30),
                   (0.30, 0.055, -0.35)],
}

_BEAT_HALF_SPAN_S = 0.45  # template support on either side of R
_WANDER_AMPLITUDE = 0.10


def beat_template(label: ClassLabel, t: np.ndarray) -> np.ndarray:
    """Evaluate the class template at times t (seconds relative to R)."""
    out = np.zeros_like(t)
    for center, std, amp in _TEMPLATES[label]:
        out += amp * np.exp(-0.5 * ((t - center) / std) ** 2)
    return out


def render_beats(positions: list[int], labels: list[ClassLabel],
                 n_samples: int, fs: float) -> np.ndarray:
    """Place one template beat at each sample position (R at the position)."""
    x = np.zeros(n_samples)
    half = int(math.ceil(_BEAT_HALF_SPAN_S * fs))
    for pos, label in zip(positions, labels):
        lo = max(0, pos - half)
        hi = min(n_samples, pos + half + 1)
        t = (np.arange(lo, hi) - pos) / fs
        x[lo:hi] += beat_template(label, t)
    return x


def synth(profile: SynthProfile, duration_s: float, fs: float,
          t0_ms: int = 0) -> SignalWindow:
    """Deterministic synthetic window with ground truth.

    One template beat per RR interval (RR = 60/bpm, jittered by
    rr_jitter), class labels drawn from class_mix, plus optional Gaussian
    noise and a slow baseline-wander sinusoid.
    """
    profile.validate()
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rng = np.random.default_rng(profile.seed)
    rr_s = 60.0 / profile.bpm
    n = int(round(duration_s * fs))

    classes = list(profile.class_mix.keys())
    probs = np.array([profile.class_mix[c] for c in classes], dtype=float)
    probs = probs / probs.sum()

    positions: list[int] = []
    labels: list[ClassLabel] = []
    t = 0.4  # leave room for the first beat's P wave
    while t < duration_s - _BEAT_HALF_SPAN_S:
        pos = int(round(t * fs))
        if positions and pos <= positions[-1]:
            pos = positions[-1] + 1
        if pos >= n:
            break
        positions.append(pos)
        labels.append(classes[rng.choice(len(classes), p=probs)])
        jitter = rng.uniform(-profile.rr_jitter, profile.rr_jitter)
        t += rr_s * (1.0 + jitter)

    x = render_beats(positions, labels, n, fs)
    tt = np.arange(n) / fs
    if profile.baseline_wander_hz > 0:
        phase = rng.uniform(0, 2 * np.pi)
        x += _WANDER_AMPLITUDE * np.sin(
            2 * np.pi * profile.baseline_wander_hz * tt + phase
        )
    if profile.noise_std > 0:
        x += rng.normal(0.0, profile.noise_std, n)

    return SignalWindow(samples=x, fs=fs, t0_ms=t0_ms,
                        truth_peaks=positions, truth_labels=labels)


# -- calibration and streaming ------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    """Affine map between wire bytes and amplitudes: amp = gain*raw + offset."""

    gain: float = 1.0
    offset: float = 0.0

    def to_amplitude(self, raw):
        return self.gain * np.asarray(raw, dtype=float) + self.offset

    def to_raw(self, amplitude) -> np.ndarray:
        raw = np.rint((np.asarray(amplitude, dtype=float) - self.offset) / self.gain)
        if np.any(raw < 0) or np.any(raw > wp.MAX_SAMPLE):
            bad = raw[(raw < 0) | (raw > wp.MAX_SAMPLE)][0]
            raise QuantizationOverflow(
                f"sample quantizes to {int(bad)}, outside 0-{wp.MAX_SAMPLE}"
            )
        return raw.astype(np.uint8)


# default agent calibration: amplitude 0.0 lands on byte 0x40
DEFAULT_CALIBRATION = Calibration(gain=0.01, offset=-0.64)


@dataclass
class StreamerConfig:
    calibration: Calibration = DEFAULT_CALIBRATION
    pulse_period_s: float = 1.0
    chunk_s: float = 0.2
    accelerated: bool = False
    lead_off_at_s: tuple[float, ...] = ()


def _smoothed_bpm(truth_peaks: list[int], fs: float, upto_s: float) -> int:
    """Rounded mean BPM over the last 5 RR intervals seen so far."""
    seen = [p for p in truth_peaks or [] if p / fs <= upto_s]
    if len(seen) < 2:
        return 0
    rr = np.diff(seen[-6:]) / fs
    return int(round(60.0 / float(np.mean(rr))))


def iter_stream(window: SignalWindow, cfg: StreamerConfig
                ) -> Iterator[tuple[float, bytes]]:
    """Yield (stream time s, chunk bytes) pairs in chronological order.

    Each chunk is one wave run; pulse bytes are interleaved every
    pulse_period_s and lead-off info frames at the configured times.
    Pacing is the caller's concern (see stream_to).
    """
    raw = cfg.calibration.to_raw(window.samples)
    chunk = max(1, int(round(cfg.chunk_s * window.fs)))
    pulse_every = max(1, int(round(cfg.pulse_period_s * window.fs)))
    lead_off_pending = sorted(
        int(round(t * window.fs)) for t in cfg.lead_off_at_s
    )
    next_pulse = pulse_every
    for start in range(0, len(raw), chunk):
        t_s = start / window.fs
        prefix = bytearray()
        while lead_off_pending and lead_off_pending[0] <= start:
            lead_off_pending.pop(0)
            prefix += bytes([wp.INFO_MARKER, wp.INFO_LEAD_OFF])
        if start >= next_pulse:
            next_pulse += pulse_every
            bpm = _smoothed_bpm(window.truth_peaks, window.fs, t_s)
            prefix += bytes([wp.PULSE_MARKER, bpm & 0xFF])
        run = bytes([wp.WAVE_MARKER]) + bytes(raw[start : start + chunk])
        yield t_s, bytes(prefix) + run


def stream_bytes(window: SignalWindow, cfg: StreamerConfig | None = None) -> bytes:
    """The full stream as one byte string (replay files, tests)."""
    cfg = cfg or StreamerConfig()
    return b"".join(chunk for _, chunk in iter_stream(window, cfg))


def stream_to(window: SignalWindow, cfg: StreamerConfig,
              sink: Callable[[bytes], None]) -> int:
    """Drive the sink chunk by chunk, pacing on wall time unless accelerated.

    Returns the number of bytes emitted.
    """
    started = time.monotonic()
    total = 0
    for t_s, chunk in iter_stream(window, cfg):
        if not cfg.accelerated:
            lag = t_s - (time.monotonic() - started)
            if lag > 0:
                time.sleep(lag)
        sink(chunk)
        total += len(chunk)
    return total


def reconstruct_wave(events, calibration: Calibration) -> np.ndarray:
    """Concatenate decoded wave runs back into an amplitude vector."""
    raw: list[int] = []
    for ev in events:
        if ev.kind is wp.FrameKind.WAVE_SAMPLES:
            raw.extend(ev.samples)
    return calibration.to_amplitude(np.array(raw, dtype=float))


def labeled_corpus(beats_per_class: int, fs: float = 360.0, seed: int = 0,
                   noise_std: float = 0.0):
    """Normalized labeled beat segments, beats_per_class per class.

    Desk-scale substitute for an annotated arrhythmia recording: each
    class is synthesized separately and segmented on its ground truth.
    """
    from ecgmon.classifier import CLASS_ORDER, normalize, segment_beats

    segments = []
    for i, label in enumerate(CLASS_ORDER):
        rr_s = 60.0 / 70.0
        duration = (beats_per_class + 2) * rr_s + 2.0
        window = synth(
            SynthProfile(bpm=70.0, class_mix={label: 1.0},
                         noise_std=noise_std, seed=seed + i),
            duration, fs,
        )
        beats = segment_beats(window, window.truth_peaks)
        segments.extend(normalize(b) for b in beats[:beats_per_class])
    return segments


# -- profile files -------------------------------------------------------------


def parse_profile(text: str) -> SynthProfile:
    """Key-value profile format, one `key = value` pair per line.

    Keys: bpm, noise_std, baseline_wander_hz, seed, rr_jitter, and
    class_mix as comma-separated LABEL:PROB pairs.  Lines starting with
    '#' are comments.
    """
    kwargs: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidProfile(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "class_mix":
            mix = {}
            for part in value.split(","):
                name, _, prob = part.partition(":")
                mix[ClassLabel(name.strip())] = float(prob)
            kwargs["class_mix"] = mix
        elif key in ("bpm", "noise_std", "baseline_wander_hz", "rr_jitter"):
            kwargs[key] = float(value)
        elif key == "seed":
            kwargs[key] = int(value)
        else:
            raise InvalidProfile(f"line {lineno}: unknown key {key!r}")
    profile = SynthProfile(**kwargs)
    profile.validate()
    return profile


def load_profile(path) -> SynthProfile:
    with open(path) as f:
        return parse_profile(f.read())
