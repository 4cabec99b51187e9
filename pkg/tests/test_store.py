import os
import random

import pytest

from ecgmon import secure_channel as sc
from ecgmon.store import RecordLog


def make_record(patient, seq, ts, payload=b"payload"):
    key = sc.SessionKey(key=bytes(32), session_id=bytes(16), mode=sc.Mode.ECDH,
                        last_seq=seq - 1)
    header = sc.RecordHeader(patient, ts, seq, sc.RecordKind.RAW_FRAME)
    return sc.seal(key, header, payload)


class TestAppendQuery:
    def test_append_then_query_byte_identical(self, tmp_path):
        with RecordLog(tmp_path) as log:
            rec = make_record("alice", 0, 1000, os.urandom(128))
            log.append(rec)
            log.flush()
            got = log.query("alice", 1000, 1000)
            assert got == [rec]
            assert sc.encode_record(got[0]) == sc.encode_record(rec)

    def test_unknown_patient_empty(self, tmp_path):
        with RecordLog(tmp_path) as log:
            assert log.query("nobody", 0, 10**15) == []

    def test_empty_range(self, tmp_path):
        with RecordLog(tmp_path) as log:
            log.append(make_record("a", 0, 500))
            assert log.query("a", 100, 100) == []

    def test_invalid_range(self, tmp_path):
        with RecordLog(tmp_path) as log:
            with pytest.raises(ValueError):
                log.query("a", 10, 5)

    def test_out_of_order_appends_reads_in_time_order(self, tmp_path):
        with RecordLog(tmp_path) as log:
            times = [500, 100, 300, 200, 400]
            for seq, ts in enumerate(times):
                log.append(make_record("bob", seq, ts))
            got = log.query("bob", 0, 1000)
            assert [r.timestamp_ms for r in got] == sorted(times)

    def test_conservation_across_patients(self, tmp_path):
        rng = random.Random(5)
        with RecordLog(tmp_path) as log:
            counts = {"p0": 0, "p1": 0, "p2": 0}
            seq = 0
            for _ in range(3000):
                p = f"p{rng.randrange(3)}"
                log.append(make_record(p, seq, rng.randrange(10**6)))
                counts[p] += 1
                seq += 1
            total = sum(log.count(p) for p in counts)
            assert total == 3000
            for p, n in counts.items():
                assert log.count(p) == n

    def test_query_matches_brute_force(self, tmp_path):
        rng = random.Random(99)
        records = []
        with RecordLog(tmp_path) as log:
            for seq in range(500):
                p = f"p{rng.randrange(4)}"
                ts = rng.randrange(0, 5000)
                rec = make_record(p, seq, ts)
                log.append(rec)
                records.append(rec)
            for _ in range(50):
                p = f"p{rng.randrange(4)}"
                t0 = rng.randrange(0, 5000)
                t1 = t0 + rng.randrange(0, 3000)
                want = sorted(
                    (r for r in records
                     if r.patient_id == p and t0 <= r.timestamp_ms <= t1),
                    key=lambda r: (r.timestamp_ms, r.seq),
                )
                assert log.query(p, t0, t1) == want


class TestRecovery:
    def test_reopen_rebuilds_identical_index(self, tmp_path):
        with RecordLog(tmp_path) as log:
            for seq in range(100):
                log.append(make_record(f"p{seq % 3}", seq, seq * 10))
            log.flush()
            index_before = log.snapshot_index()
        with RecordLog(tmp_path) as reopened:
            assert reopened.snapshot_index() == index_before
            assert reopened.recovery.tail_bytes_dropped == 0

    def test_truncation_at_every_offset_of_last_record(self, tmp_path):
        base = tmp_path / "base"
        with RecordLog(base) as log:
            for seq in range(5):
                log.append(make_record("p", seq, seq * 10, os.urandom(40)))
            log.flush()
        full = (base / "records.log").read_bytes()

        # locate the start of the final record's frame
        import struct
        pos = 0
        starts = []
        while pos < len(full):
            (length,) = struct.unpack_from("<I", full, pos)
            starts.append(pos)
            pos += 4 + length + 4
        final_start = starts[-1]

        for cut in range(final_start, len(full)):
            d = tmp_path / f"cut{cut}"
            d.mkdir()
            (d / "records.log").write_bytes(full[:cut])
            with RecordLog(d) as log:
                assert log.recovery.records_recovered == 4
                assert log.recovery.tail_bytes_dropped == cut - final_start
                assert log.count("p") == 4

    def test_corrupt_crc_tail_dropped(self, tmp_path):
        with RecordLog(tmp_path) as log:
            for seq in range(3):
                log.append(make_record("p", seq, seq))
            log.flush()
        path = tmp_path / "records.log"
        data = bytearray(path.read_bytes())
        data[-1] ^= 0xFF  # corrupt final CRC byte
        path.write_bytes(bytes(data))
        with RecordLog(tmp_path) as log:
            assert log.count("p") == 2
            assert log.recovery.tail_bytes_dropped > 0

    def test_durability_after_flush(self, tmp_path):
        log = RecordLog(tmp_path)
        rec = make_record("p", 0, 42, b"must survive")
        log.append(rec)
        log.flush()
        # simulate a crash: do not close cleanly, reopen from disk
        log._writer.close()
        log._reader.close()
        with RecordLog(tmp_path) as reopened:
            assert reopened.query("p", 0, 100) == [rec]

    def test_write_back_verification(self, tmp_path):
        with RecordLog(tmp_path, verify_writes=True) as log:
            for seq in range(10):
                log.append(make_record("p", seq, seq))
            assert log.count("p") == 10
