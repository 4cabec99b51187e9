"""Embedded append-only persistence for cipher records.

One writer, many readers.  Records are framed on disk as

    u32 length | record bytes (secure_channel wire layout) | u32 CRC

where the CRC covers the length prefix plus the record bytes.  The
(patient, timestamp) index is held in memory and rebuilt from the data
alone on open; a truncated or corrupt tail (crash mid-append) is dropped
and reported, never propagated.
"""

from __future__ import annotations

import errno
import os
import struct
import threading
import zlib
from bisect import insort
from dataclasses import dataclass, field
from pathlib import Path

from ecgmon.secure_channel import CipherRecord, decode_record, encode_record

_LEN = struct.Struct("<I")


class StorageFull(OSError):
    pass


class CorruptRecord(ValueError):
    """Write-back verification failed for a freshly appended record."""


@dataclass
class _IndexEntry:
    timestamp_ms: int
    seq: int
    offset: int

    def sort_key(self):
        return (self.timestamp_ms, self.seq, self.offset)

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()


@dataclass
class RecoveryReport:
    records_recovered: int = 0
    tail_bytes_dropped: int = 0


class RecordLog:
    """Single-writer append-only record log with a per-patient time index."""

    def __init__(self, directory, verify_writes: bool = False):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / "records.log"
        self.verify_writes = verify_writes
        self._write_lock = threading.Lock()
        self._read_lock = threading.Lock()
        self._index: dict[str, list[_IndexEntry]] = {}
        self.recovery = RecoveryReport()
        self._recover()
        self._writer = open(self.path, "ab")
        self._reader = open(self.path, "rb")

    # -- lifecycle -----------------------------------------------------------

    def _recover(self) -> None:
        """Rebuild the index by scanning; truncate a damaged tail."""
        if not self.path.exists():
            self.path.touch()
            return
        good_end = 0
        with open(self.path, "rb") as f:
            data = f.read()
        pos = 0
        while pos + 4 <= len(data):
            (length,) = _LEN.unpack_from(data, pos)
            end = pos + 4 + length + 4
            if end > len(data):
                break
            frame = data[pos : pos + 4 + length]
            (crc,) = _LEN.unpack_from(data, pos + 4 + length)
            if zlib.crc32(frame) != crc:
                break
            record, _ = decode_record(frame, 4)
            self._index_record(record, pos)
            self.recovery.records_recovered += 1
            good_end = end
            pos = end
        if good_end < len(data):
            self.recovery.tail_bytes_dropped = len(data) - good_end
            with open(self.path, "r+b") as f:
                f.truncate(good_end)

    def close(self) -> None:
        self._writer.close()
        self._reader.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- writes --------------------------------------------------------------

    def _index_record(self, record: CipherRecord, offset: int) -> None:
        entries = self._index.setdefault(record.patient_id, [])
        insort(entries, _IndexEntry(record.timestamp_ms, record.seq, offset))

    def append(self, record: CipherRecord) -> int:
        """Append one record; durable after flush().  Returns its offset."""
        body = encode_record(record)
        frame = _LEN.pack(len(body)) + body
        crc = _LEN.pack(zlib.crc32(frame))
        with self._write_lock:
            offset = self._writer.tell()
            try:
                self._writer.write(frame + crc)
            except OSError as exc:
                if exc.errno == errno.ENOSPC:
                    raise StorageFull(str(exc)) from exc
                raise
            # buffer flush keeps readers coherent; durability needs flush()
            self._writer.flush()
            if self.verify_writes:
                with self._read_lock:
                    self._reader.seek(offset)
                    back = self._reader.read(len(frame) + 4)
                if back != frame + crc:
                    raise CorruptRecord(f"write-back mismatch at offset {offset}")
            self._index_record(record, offset)
        return offset

    def flush(self) -> None:
        with self._write_lock:
            self._writer.flush()
            os.fsync(self._writer.fileno())

    # -- reads ---------------------------------------------------------------

    def read_at(self, offset: int) -> CipherRecord:
        with self._read_lock:
            self._reader.seek(offset)
            (length,) = _LEN.unpack(self._reader.read(4))
            body = self._reader.read(length)
        record, _ = decode_record(body)
        return record

    def query(self, patient_id: str, t0_ms: int, t1_ms: int) -> list[CipherRecord]:
        """All records with t0 <= timestamp <= t1, ascending (timestamp, seq).

        Unknown patients yield an empty list.  No decryption happens here.
        """
        if t0_ms > t1_ms:
            raise ValueError("t0 must be <= t1")
        entries = self._index.get(patient_id, [])
        return [
            self.read_at(e.offset)
            for e in entries
            if t0_ms <= e.timestamp_ms <= t1_ms
        ]

    def patients(self) -> list[str]:
        return sorted(self._index)

    def count(self, patient_id: str) -> int:
        return len(self._index.get(patient_id, []))

    def snapshot_index(self) -> dict[str, list[tuple[int, int, int]]]:
        """(timestamp, seq, offset) triples per patient, for equivalence checks."""
        return {
            pid: [(e.timestamp_ms, e.seq, e.offset) for e in entries]
            for pid, entries in self._index.items()
        }
