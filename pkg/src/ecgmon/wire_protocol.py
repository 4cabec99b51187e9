"""Codec for the marker-byte ECG serial stream.

The stream is a flat byte sequence with three marker bytes:

    0xF8  wave run follows (data bytes < 0xF8, one per sample)
    0xFA  next byte is a pulse value (any value, 0x80 == 128 bpm is legal)
    0xFB  next byte is an info code (0x11 == lead off)

A wave run has no terminator of its own; it ends at the next marker or at
an explicit flush.  Decoding is incremental: bytes may arrive in arbitrary
chunks and the decoder carries its state across calls.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

WAVE_MARKER = 0xF8
PULSE_MARKER = 0xFA
INFO_MARKER = 0xFB
INFO_LEAD_OFF = 0x11

# Data bytes inside a wave run must stay below the marker space.
MAX_SAMPLE = 0xF7


class FrameKind(enum.Enum):
    WAVE_SAMPLES = "wave_samples"
    PULSE = "pulse"
    INFO = "info"


class SampleOutOfRange(ValueError):
    """A wave sample >= 0xF8 cannot be encoded unambiguously."""


@dataclass(frozen=True)
class FrameEvent:
    """One decoded event: a wave run, a pulse value, or an info byte."""

    kind: FrameKind
    samples: tuple[int, ...] = ()
    pulse_bpm: int | None = None
    info_code: int | None = None

    @staticmethod
    def wave(samples) -> "FrameEvent":
        samples = tuple(int(s) for s in samples)
        if not samples:
            raise ValueError("wave run must carry at least one sample")
        for s in samples:
            if not 0 <= s <= MAX_SAMPLE:
                raise SampleOutOfRange(f"sample {s:#x} outside 0x00-0xF7")
        return FrameEvent(FrameKind.WAVE_SAMPLES, samples=samples)

    @staticmethod
    def pulse(bpm: int) -> "FrameEvent":
        if not 0 <= bpm <= 0xFF:
            raise ValueError(f"pulse value {bpm} outside one byte")
        return FrameEvent(FrameKind.PULSE, pulse_bpm=int(bpm))

    @staticmethod
    def info(code: int) -> "FrameEvent":
        if not 0 <= code <= 0xFF:
            raise ValueError(f"info code {code} outside one byte")
        return FrameEvent(FrameKind.INFO, info_code=int(code))

    @property
    def is_lead_off(self) -> bool:
        return self.kind is FrameKind.INFO and self.info_code == INFO_LEAD_OFF


class _Mode(enum.Enum):
    IDLE = 0
    IN_WAVE = 1
    EXPECT_PULSE = 2
    EXPECT_INFO = 3


@dataclass
class Decoder:
    """Incremental stream decoder.

    Single-owner mutable state; use one Decoder per session.  Bytes that
    cannot belong to any frame (data bytes before the first wave marker,
    unknown markers 0xF9/0xFC-0xFF) are skipped and counted so a decoder
    resynchronizes on a damaged line instead of failing.
    """

    _mode: _Mode = _Mode.IDLE
    _pending: list[int] = field(default_factory=list)
    unexpected_data_bytes: int = 0
    unknown_marker_bytes: int = 0

    def feed(self, data: bytes | bytearray) -> list[FrameEvent]:
        """Consume a chunk, returning every event completed by it."""
        events: list[FrameEvent] = []
        for b in bytes(data):
            if self._mode is _Mode.EXPECT_PULSE:
                events.append(FrameEvent.pulse(b))
                self._mode = _Mode.IDLE
            elif self._mode is _Mode.EXPECT_INFO:
                events.append(FrameEvent.info(b))
                self._mode = _Mode.IDLE
            elif b <= MAX_SAMPLE:
                if self._mode is _Mode.IN_WAVE:
                    self._pending.append(b)
                else:
                    # data byte with no preceding wave marker: resync
                    self.unexpected_data_bytes += 1
            elif b == WAVE_MARKER:
                self._flush_pending(events)
                self._mode = _Mode.IN_WAVE
            elif b == PULSE_MARKER:
                self._flush_pending(events)
                self._mode = _Mode.EXPECT_PULSE
            elif b == INFO_MARKER:
                self._flush_pending(events)
                self._mode = _Mode.EXPECT_INFO
            else:
                # unknown marker: flush and skip
                self._flush_pending(events)
                self._mode = _Mode.IDLE
                self.unknown_marker_bytes += 1
        return events

    def flush(self) -> list[FrameEvent]:
        """Terminate a pending wave run (callers flush on read timeout)."""
        events: list[FrameEvent] = []
        self._flush_pending(events)
        self._mode = _Mode.IDLE
        return events

    def _flush_pending(self, out: list[FrameEvent]) -> None:
        if self._pending:
            out.append(FrameEvent.wave(self._pending))
            self._pending.clear()


def decode(data: bytes) -> list[FrameEvent]:
    """One-shot decode of a complete byte sequence (feed + flush)."""
    dec = Decoder()
    events = dec.feed(data)
    events.extend(dec.flush())
    return events


def encode(events) -> bytes:
    """Serialize events back to stream bytes.

    Each wave run re-emits its own 0xF8 so decode(encode(events)) never
    merges adjacent runs.
    """
    out = bytearray()
    for ev in events:
        if ev.kind is FrameKind.WAVE_SAMPLES:
            if not ev.samples:
                raise ValueError("wave event without samples")
            out.append(WAVE_MARKER)
            for s in ev.samples:
                if not 0 <= s <= MAX_SAMPLE:
                    raise SampleOutOfRange(f"sample {s:#x} outside 0x00-0xF7")
                out.append(s)
        elif ev.kind is FrameKind.PULSE:
            out.append(PULSE_MARKER)
            out.append(ev.pulse_bpm & 0xFF)
        elif ev.kind is FrameKind.INFO:
            out.append(INFO_MARKER)
            out.append(ev.info_code & 0xFF)
        else:  # pragma: no cover - enum is closed
            raise ValueError(f"unknown event kind {ev.kind}")
    return bytes(out)
