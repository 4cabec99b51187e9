"""Per-session real-time pipeline state.

Each connected agent gets one SessionState, owned by its handler thread.
Incoming records are opened, decoded, buffered, and every analysis hop
the rolling window is filtered (if enabled), R-peaks are detected, the
newest beat is classified, and the latest metrics snapshot is published.
The paired original/decrypted samples for the live view come from
decoding the in-flight plaintext and the stored record independently.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ecgmon import dsp
from ecgmon.classifier import CnnModel, normalize, segment_beats, SEGMENT_LEN
from ecgmon.signal_source import Calibration, SignalWindow
from ecgmon.wire_protocol import Decoder, FrameKind


@dataclass
class SessionSnapshot:
    """Immutable view published to stream subscribers and session.list."""

    patient_id: str
    session_id_hex: str
    running: bool
    filter_enabled: bool
    predicted_class: str | None
    pulse_bpm: int
    latency_ms: float
    processed_count: int
    lead_off: bool
    resync_bytes: int
    hop_ingest_monotonic: float
    last_result_monotonic: float

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "session_id": self.session_id_hex,
            "running": self.running,
            "filter_enabled": self.filter_enabled,
            "class": self.predicted_class,
            "pulse": self.pulse_bpm,
            "latency_ms": self.latency_ms,
            "count": self.processed_count,
            "lead_off": self.lead_off,
            "resync_bytes": self.resync_bytes,
            "hop_ingest_monotonic": self.hop_ingest_monotonic,
            "last_result_monotonic": self.last_result_monotonic,
        }


@dataclass
class SessionState:
    patient_id: str
    session_id_hex: str
    fs: float
    calibration: Calibration
    buffer_s: float = 10.0
    hop_s: float = 2.0
    model: CnnModel | None = None
    display_band: tuple[float, float] = (0.5, 40.0)
    running: bool = True
    filter_enabled: bool = False

    decoder: Decoder = field(default_factory=Decoder)
    stored_decoder: Decoder = field(default_factory=Decoder)
    buffer: deque = field(init=False)
    processed_count: int = 0
    pulse_bpm: int = 0
    predicted_class: str | None = None
    latency_ms: float = 0.0
    lead_off: bool = False
    last_ingest_monotonic: float = 0.0
    last_result_monotonic: float = 0.0
    hop_ingest_monotonic: float = 0.0
    _samples_since_hop: int = 0

    def __post_init__(self):
        self.buffer = deque(maxlen=int(self.buffer_s * self.fs))

    # -- ingest ---------------------------------------------------------------

    def ingest_plaintext(self, plaintext: bytes, stored_plaintext: bytes,
                         timestamp_ms: int) -> list[tuple[int, float, float]]:
        """Feed one opened record; returns paired (t_ms, live, stored) samples.

        The stored_plaintext comes from re-opening the record that was
        appended to the log, so equal pairs prove decrypt(stored) equals
        the live path.
        """
        self.last_ingest_monotonic = time.monotonic()
        live_events = self.decoder.feed(plaintext)
        stored_events = self.stored_decoder.feed(stored_plaintext)

        live_samples: list[float] = []
        for ev in live_events:
            if ev.kind is FrameKind.WAVE_SAMPLES:
                amps = self.calibration.to_amplitude(list(ev.samples))
                live_samples.extend(float(a) for a in amps)
                if self.lead_off:
                    self.lead_off = False
            elif ev.kind is FrameKind.PULSE:
                self.pulse_bpm = ev.pulse_bpm
            elif ev.is_lead_off:
                self.lead_off = True

        stored_samples: list[float] = []
        for ev in stored_events:
            if ev.kind is FrameKind.WAVE_SAMPLES:
                amps = self.calibration.to_amplitude(list(ev.samples))
                stored_samples.extend(float(a) for a in amps)

        pairs = []
        for i, (live, stored) in enumerate(zip(live_samples, stored_samples)):
            t_ms = timestamp_ms + int(1000.0 * i / self.fs)
            pairs.append((t_ms, live, stored))

        self.buffer.extend(live_samples)
        self.processed_count += len(live_samples)
        self._samples_since_hop += len(live_samples)
        return pairs

    def hop_due(self) -> bool:
        return (self._samples_since_hop >= self.hop_s * self.fs
                and len(self.buffer) >= 2 * self.fs)

    # -- analysis hop -----------------------------------------------------------

    def run_hop(self) -> None:
        """Analysis pass over the rolling buffer; updates latest metrics."""
        self._samples_since_hop = 0
        self.hop_ingest_monotonic = self.last_ingest_monotonic
        if self.lead_off:
            # classification pauses until wave data resumes
            self.last_result_monotonic = time.monotonic()
            self.latency_ms = 1000.0 * (
                self.last_result_monotonic - self.hop_ingest_monotonic
            )
            return
        window = np.asarray(self.buffer, dtype=float)
        if self.filter_enabled:
            low, high = self.display_band
            high = min(high, 0.45 * self.fs)
            window = dsp.bandpass_filter(window, low, high, self.fs, order=2)
        peaks = dsp.pan_tompkins(window, self.fs)
        label = self._classify_newest(window, peaks)
        if label is not None:
            self.predicted_class = label
        self.last_result_monotonic = time.monotonic()
        self.latency_ms = 1000.0 * (
            self.last_result_monotonic - self.hop_ingest_monotonic
        )

    def _classify_newest(self, window: np.ndarray, peaks: list[int]) -> str | None:
        if self.model is None or not peaks:
            return None
        shim = SignalWindow(samples=window, fs=self.fs)
        half = SEGMENT_LEN // 2
        usable = [p for p in peaks if half <= p <= len(window) - half]
        if not usable:
            return None
        segment = segment_beats(shim, [usable[-1]])
        if not segment:
            return None
        from ecgmon.classifier import predict

        label, _ = predict(self.model, normalize(segment[0]))
        return label.value

    def finalize(self) -> None:
        """Flush pending wave runs at session end so counts are complete."""
        for ev in self.decoder.flush():
            if ev.kind is FrameKind.WAVE_SAMPLES:
                amps = self.calibration.to_amplitude(list(ev.samples))
                self.buffer.extend(float(a) for a in amps)
                self.processed_count += len(ev.samples)
        self.stored_decoder.flush()

    def snapshot(self) -> SessionSnapshot:
        return SessionSnapshot(
            patient_id=self.patient_id,
            session_id_hex=self.session_id_hex,
            running=self.running,
            filter_enabled=self.filter_enabled,
            predicted_class=self.predicted_class,
            pulse_bpm=self.pulse_bpm,
            latency_ms=self.latency_ms,
            processed_count=self.processed_count,
            lead_off=self.lead_off,
            resync_bytes=(self.decoder.unexpected_data_bytes
                          + self.decoder.unknown_marker_bytes),
            hop_ingest_monotonic=self.hop_ingest_monotonic,
            last_result_monotonic=self.last_result_monotonic,
        )
