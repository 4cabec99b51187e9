import random

import pytest

from ecgmon import wire_protocol as wp
from ecgmon.wire_protocol import Decoder, FrameEvent, FrameKind, decode, encode


def test_reference_stream_decodes_to_expected_events():
    # wave run 0x20 0x23 0x25, pulse 0x80, wave run 0x24 0x25 0x26
    data = bytes([0xF8, 0x20, 0x23, 0x25, 0xFA, 0x80, 0xF8, 0x24, 0x25, 0x26])
    events = decode(data)
    assert events == [
        FrameEvent.wave([32, 35, 37]),
        FrameEvent.pulse(128),
        FrameEvent.wave([36, 37, 38]),
    ]


def test_lead_off_info_frame():
    events = decode(bytes([0xFB, 0x11]))
    assert events == [FrameEvent.info(0x11)]
    assert events[0].is_lead_off


def test_empty_input_no_events_state_unchanged():
    dec = Decoder()
    assert dec.feed(b"") == []
    assert dec.flush() == []


def test_incremental_split_run_held_until_terminated():
    dec = Decoder()
    assert dec.feed(bytes([0xF8, 0x20])) == []
    second = dec.feed(bytes([0x21, 0xFA, 0x40]))
    assert second == [FrameEvent.wave([32, 33]), FrameEvent.pulse(64)]
    # one-shot decode of the concatenation agrees
    assert decode(bytes([0xF8, 0x20, 0x21, 0xFA, 0x40])) == second


def test_pulse_data_byte_may_be_marker_valued():
    # 0xF8 after 0xFA is pulse data, not a wave marker
    assert decode(bytes([0xFA, 0xF8])) == [FrameEvent.pulse(0xF8)]
    assert decode(bytes([0xFB, 0xFB])) == [FrameEvent.info(0xFB)]


def test_encode_examples():
    assert encode([FrameEvent.pulse(128)]) == bytes([0xFA, 0x80])
    assert encode([]) == b""
    assert encode([FrameEvent.wave([32]), FrameEvent.wave([35])]) == bytes(
        [0xF8, 0x20, 0xF8, 0x23]
    )


def test_encode_rejects_out_of_range_sample():
    ev = FrameEvent(FrameKind.WAVE_SAMPLES, samples=(0xF8,))
    with pytest.raises(wp.SampleOutOfRange):
        encode([ev])
    with pytest.raises(wp.SampleOutOfRange):
        FrameEvent.wave([0xFF])


def test_unexpected_data_byte_in_idle_is_counted_and_skipped():
    dec = Decoder()
    events = dec.feed(bytes([0x10, 0x11, 0xF8, 0x20]))
    events += dec.flush()
    assert events == [FrameEvent.wave([32])]
    assert dec.unexpected_data_bytes == 2


def test_unknown_marker_flushes_run_and_is_counted():
    dec = Decoder()
    events = dec.feed(bytes([0xF8, 0x20, 0xF9, 0xF8, 0x21]))
    events += dec.flush()
    assert events == [FrameEvent.wave([32]), FrameEvent.wave([33])]
    assert dec.unknown_marker_bytes == 1


def test_adjacent_wave_markers_do_not_emit_empty_run():
    assert decode(bytes([0xF8, 0xF8, 0x20])) == [FrameEvent.wave([32])]


def _random_events(rng, n):
    events = []
    for _ in range(n):
        k = rng.randrange(3)
        if k == 0:
            run = [rng.randrange(0xF8) for _ in range(rng.randint(1, 12))]
            events.append(FrameEvent.wave(run))
        elif k == 1:
            events.append(FrameEvent.pulse(rng.randrange(256)))
        else:
            events.append(FrameEvent.info(rng.randrange(256)))
    return events


def test_round_trip_random_event_lists():
    rng = random.Random(1234)
    for _ in range(500):
        events = _random_events(rng, rng.randint(0, 20))
        assert decode(encode(events)) == events


def test_chunk_invariance_random_splits():
    rng = random.Random(99)
    for _ in range(200):
        events = _random_events(rng, rng.randint(1, 15))
        data = encode(events)
        whole = decode(data)

        dec = Decoder()
        got = []
        i = 0
        while i < len(data):
            j = rng.randint(i + 1, len(data))
            got += dec.feed(data[i:j])
            i = j
        got += dec.flush()
        assert got == whole
