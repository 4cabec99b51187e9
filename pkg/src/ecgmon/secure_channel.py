"""Authenticated encryption for the patient->gateway and gateway->console paths.

Two session-key modes:

  * pre-shared: a configured 64-hex-char secret; per-session keys are
    derived from it with a random session id (the "plain AES" baseline).
  * ecdh: ephemeral X25519 key agreement with key confirmation over the
    handshake transcript before any data flows.

Records are AEAD-sealed (AES-256-GCM) with the record header as
associated data, so header tampering fails authentication.  Nonces are
derived deterministically from the sequence number and never reused
under one key.

Record wire layout (little-endian):

    magic "EPPS" | version u8 | kind u8 | patient_id_len u16 + UTF-8 |
    timestamp_ms u64 | seq u64 | nonce 12 B | ciphertext_len u32 + bytes |
    tag 16 B

Handshake messages are length-prefixed (u16): public value, then
confirmation MAC.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import json
import os
import socket
import struct
import time
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

MAGIC = b"EPPS"
VERSION = 1
NONCE_LEN = 12
TAG_LEN = 16
KEY_LEN = 32
SESSION_ID_LEN = 16


class AuthFailure(Exception):
    """Record failed authentication (tamper or wrong key, by design alike)."""


class SeqReplay(ValueError):
    """Sequence number not strictly greater than the session's last."""


class ConfirmFailure(Exception):
    """Handshake transcript MAC mismatch; session must be abandoned."""


class TransportClosed(ConnectionError):
    pass


class Mode(enum.Enum):
    PRESHARED = "preshared"
    ECDH = "ecdh"


class RecordKind(enum.IntEnum):
    RAW_FRAME = 1
    SEGMENT = 2
    PULSE = 3
    ANALYSIS_INPUT = 4


class Role(enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


@dataclass
class SessionKey:
    """Per-session secret.  Never serialized; repr masks the key bytes."""

    key: bytes
    session_id: bytes
    mode: Mode
    last_seq: int = field(default=-1, compare=False)

    def __repr__(self):  # keep the key out of logs
        return (f"SessionKey(mode={self.mode.value}, "
                f"session_id={self.session_id.hex()}, key=<{len(self.key)*8} bits>)")


@dataclass(frozen=True)
class RecordHeader:
    patient_id: str
    timestamp_ms: int
    seq: int
    kind: RecordKind


@dataclass(frozen=True)
class CipherRecord:
    patient_id: str
    timestamp_ms: int
    seq: int
    kind: RecordKind
    nonce: bytes
    ciphertext: bytes
    tag: bytes

    @property
    def header(self) -> RecordHeader:
        return RecordHeader(self.patient_id, self.timestamp_ms, self.seq, self.kind)


def _header_bytes(h: RecordHeader) -> bytes:
    pid = h.patient_id.encode("utf-8")
    if len(pid) > 0xFFFF:
        raise ValueError("patient_id too long")
    return (MAGIC + struct.pack("<BBH", VERSION, int(h.kind), len(pid)) + pid
            + struct.pack("<QQ", h.timestamp_ms, h.seq))


def _nonce_for_seq(seq: int) -> bytes:
    return b"\x00\x00\x00\x00" + struct.pack("<Q", seq)


def seal(key: SessionKey, header: RecordHeader, plaintext: bytes) -> CipherRecord:
    """AEAD-encrypt under the session key with the header as AAD."""
    if header.seq <= key.last_seq:
        raise SeqReplay(f"seq {header.seq} <= last {key.last_seq}")
    key.last_seq = header.seq
    nonce = _nonce_for_seq(header.seq)
    sealed = AESGCM(key.key).encrypt(nonce, plaintext, _header_bytes(header))
    return CipherRecord(
        patient_id=header.patient_id,
        timestamp_ms=header.timestamp_ms,
        seq=header.seq,
        kind=header.kind,
        nonce=nonce,
        ciphertext=sealed[:-TAG_LEN],
        tag=sealed[-TAG_LEN:],
    )


def open_record(key: SessionKey, record: CipherRecord) -> bytes:
    """Plaintext iff the tag verifies over ciphertext + header."""
    try:
        return AESGCM(key.key).decrypt(
            record.nonce, record.ciphertext + record.tag,
            _header_bytes(record.header),
        )
    except InvalidTag as exc:
        raise AuthFailure("record failed authentication") from exc


def encode_record(record: CipherRecord) -> bytes:
    head = _header_bytes(record.header)
    return (head + record.nonce
            + struct.pack("<I", len(record.ciphertext)) + record.ciphertext
            + record.tag)


def decode_record(data: bytes, offset: int = 0) -> tuple[CipherRecord, int]:
    """Parse one record at offset; returns (record, next offset)."""
    view = memoryview(data)
    if view[offset : offset + 4] != MAGIC:
        raise ValueError("bad record magic")
    pos = offset + 4
    version, kind, pid_len = struct.unpack_from("<BBH", view, pos)
    if version != VERSION:
        raise ValueError(f"unsupported record version {version}")
    pos += 4
    patient_id = bytes(view[pos : pos + pid_len]).decode("utf-8")
    pos += pid_len
    timestamp_ms, seq = struct.unpack_from("<QQ", view, pos)
    pos += 16
    nonce = bytes(view[pos : pos + NONCE_LEN])
    pos += NONCE_LEN
    (ct_len,) = struct.unpack_from("<I", view, pos)
    pos += 4
    ciphertext = bytes(view[pos : pos + ct_len])
    pos += ct_len
    tag = bytes(view[pos : pos + TAG_LEN])
    pos += TAG_LEN
    if len(tag) != TAG_LEN or len(ciphertext) != ct_len:
        raise ValueError("truncated record")
    return CipherRecord(patient_id, timestamp_ms, seq, RecordKind(kind),
                        nonce, ciphertext, tag), pos


# -- transports ---------------------------------------------------------------


class SocketTransport:
    """Duplex byte channel over a connected socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send_all(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise TransportClosed(str(exc)) from exc

    def recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self._sock.recv(n - len(buf))
            except OSError as exc:
                raise TransportClosed(str(exc)) from exc
            if not chunk:
                raise TransportClosed("peer closed during read")
            buf += chunk
        return bytes(buf)


def send_frame(transport, payload: bytes) -> None:
    if len(payload) > 0xFFFF:
        raise ValueError("handshake frame too large")
    transport.send_all(struct.pack("<H", len(payload)) + payload)


def recv_frame(transport) -> bytes:
    (n,) = struct.unpack("<H", transport.recv_exact(2))
    return transport.recv_exact(n)


# -- key agreement ------------------------------------------------------------

_HKDF_INFO = b"ecgmon session v1"
_CONFIRM_INIT = b"confirm initiator"
_CONFIRM_RESP = b"confirm responder"


def _derive_session(shared: bytes, transcript: bytes) -> tuple[bytes, bytes, bytes]:
    okm = HKDF(
        algorithm=hashes.SHA256(),
        length=KEY_LEN + KEY_LEN + SESSION_ID_LEN,
        salt=hashlib.sha256(transcript).digest(),
        info=_HKDF_INFO,
    ).derive(shared)
    return okm[:KEY_LEN], okm[KEY_LEN : 2 * KEY_LEN], okm[2 * KEY_LEN :]


def handshake(role: Role, transport) -> SessionKey:
    """Ephemeral X25519 agreement with transcript confirmation.

    Both sides derive the same 256-bit key; a MAC over the transcript is
    exchanged and verified before the key is returned.
    """
    priv = X25519PrivateKey.generate()
    pub = priv.public_key().public_bytes_raw()

    if role is Role.INITIATOR:
        send_frame(transport, pub)
        peer = recv_frame(transport)
        transcript = pub + peer
    else:
        peer = recv_frame(transport)
        send_frame(transport, pub)
        transcript = peer + pub

    try:
        shared = priv.exchange(X25519PublicKey.from_public_bytes(peer))
    except ValueError as exc:
        raise ConfirmFailure(f"invalid peer public value: {exc}") from exc
    key, confirm_key, session_id = _derive_session(shared, transcript)

    my_tag = _CONFIRM_INIT if role is Role.INITIATOR else _CONFIRM_RESP
    peer_tag = _CONFIRM_RESP if role is Role.INITIATOR else _CONFIRM_INIT
    my_mac = hmac.new(confirm_key, my_tag + transcript, hashlib.sha256).digest()
    expected = hmac.new(confirm_key, peer_tag + transcript, hashlib.sha256).digest()

    if role is Role.INITIATOR:
        send_frame(transport, my_mac)
        peer_mac = recv_frame(transport)
    else:
        peer_mac = recv_frame(transport)
        if not hmac.compare_digest(peer_mac, expected):
            raise ConfirmFailure("transcript MAC mismatch")
        send_frame(transport, my_mac)
    if not hmac.compare_digest(peer_mac, expected):
        raise ConfirmFailure("transcript MAC mismatch")

    return SessionKey(key=key, session_id=session_id, mode=Mode.ECDH)


def parse_preshared_secret(hex_secret: str) -> bytes:
    secret = bytes.fromhex(hex_secret.strip())
    if len(secret) != KEY_LEN:
        raise ValueError("pre-shared secret must be 64 hex chars (256 bits)")
    return secret


def preshared_handshake(role: Role, transport, psk: bytes) -> SessionKey:
    """Session setup from a pre-shared secret.

    The initiator picks a random session id; both sides derive a
    per-session key from the PSK and prove possession with MACs.  No
    asymmetric exchange happens (this is the baseline the ecdh mode is
    benchmarked against).
    """
    if len(psk) != KEY_LEN:
        raise ValueError("psk must be 32 bytes")
    if role is Role.INITIATOR:
        session_id = os.urandom(SESSION_ID_LEN)
        send_frame(transport, session_id)
    else:
        session_id = recv_frame(transport)
        if len(session_id) != SESSION_ID_LEN:
            raise ConfirmFailure("bad session id length")
    key, confirm_key, _ = _derive_session(psk, session_id)

    my_tag = _CONFIRM_INIT if role is Role.INITIATOR else _CONFIRM_RESP
    peer_tag = _CONFIRM_RESP if role is Role.INITIATOR else _CONFIRM_INIT
    my_mac = hmac.new(confirm_key, my_tag + session_id, hashlib.sha256).digest()
    expected = hmac.new(confirm_key, peer_tag + session_id, hashlib.sha256).digest()
    if role is Role.INITIATOR:
        send_frame(transport, my_mac)
        peer_mac = recv_frame(transport)
    else:
        peer_mac = recv_frame(transport)
        if not hmac.compare_digest(peer_mac, expected):
            raise ConfirmFailure("pre-shared confirmation mismatch")
        send_frame(transport, my_mac)
    if not hmac.compare_digest(peer_mac, expected):
        raise ConfirmFailure("pre-shared confirmation mismatch")
    return SessionKey(key=key, session_id=session_id, mode=Mode.PRESHARED)


# -- mode benchmark -----------------------------------------------------------


@dataclass
class ModeBench:
    mode: str
    setup_time_s: float
    seal_median_s: float
    seal_p95_s: float
    open_median_s: float
    open_p95_s: float
    throughput_records_per_s: float


@dataclass
class BenchReport:
    payload_size: int
    n_records: int
    modes: list[ModeBench]

    def to_json(self) -> str:
        return json.dumps(
            {
                "payload_size": self.payload_size,
                "n_records": self.n_records,
                "modes": [vars(m) for m in self.modes],
            },
            indent=2,
        )

    def format_table(self) -> str:
        cols = ["mode", "setup_s", "seal_med_us", "seal_p95_us",
                "open_med_us", "open_p95_us", "records/s"]
        lines = ["  ".join(f"{c:>12}" for c in cols)]
        for m in self.modes:
            row = [m.mode, f"{m.setup_time_s:.6f}",
                   f"{m.seal_median_s * 1e6:.1f}", f"{m.seal_p95_s * 1e6:.1f}",
                   f"{m.open_median_s * 1e6:.1f}", f"{m.open_p95_s * 1e6:.1f}",
                   f"{m.throughput_records_per_s:.0f}"]
            lines.append("  ".join(f"{v:>12}" for v in row))
        return "\n".join(lines)


def _handshake_pair() -> tuple[SessionKey, SessionKey, float]:
    a, b = socket.socketpair()
    try:
        import threading

        result: dict = {}

        def responder():
            result["resp"] = handshake(Role.RESPONDER, SocketTransport(b))

        t = threading.Thread(target=responder)
        started = time.perf_counter()
        t.start()
        init = handshake(Role.INITIATOR, SocketTransport(a))
        t.join()
        elapsed = time.perf_counter() - started
        return init, result["resp"], elapsed
    finally:
        a.close()
        b.close()


def bench_modes(payload_size: int, n_records: int) -> BenchReport:
    """Setup, per-record latency, and throughput for both key modes.

    Descriptive only: no target numbers are asserted here.  Pre-shared
    setup time is 0 by definition (no key agreement round trips).
    """
    payload = os.urandom(payload_size)
    modes = []
    for mode in (Mode.PRESHARED, Mode.ECDH):
        if mode is Mode.ECDH:
            key, _, setup = _handshake_pair()
        else:
            psk = os.urandom(KEY_LEN)
            key, _, _ = _derive_session(psk, os.urandom(SESSION_ID_LEN))
            key = SessionKey(key=key, session_id=os.urandom(SESSION_ID_LEN),
                             mode=Mode.PRESHARED)
            setup = 0.0
        seal_times, open_times = [], []
        records = []
        started = time.perf_counter()
        for seq in range(n_records):
            header = RecordHeader("bench", seq, seq, RecordKind.RAW_FRAME)
            t0 = time.perf_counter()
            rec = seal(key, header, payload)
            seal_times.append(time.perf_counter() - t0)
            records.append(rec)
        for rec in records:
            t0 = time.perf_counter()
            open_record(key, rec)
            open_times.append(time.perf_counter() - t0)
        total = time.perf_counter() - started
        seal_sorted = sorted(seal_times)
        open_sorted = sorted(open_times)

        def pct(values, q):
            return values[min(len(values) - 1, int(q * len(values)))]

        modes.append(ModeBench(
            mode=mode.value,
            setup_time_s=setup,
            seal_median_s=pct(seal_sorted, 0.5),
            seal_p95_s=pct(seal_sorted, 0.95),
            open_median_s=pct(open_sorted, 0.5),
            open_p95_s=pct(open_sorted, 0.95),
            throughput_records_per_s=(2 * n_records) / total,
        ))
    return BenchReport(payload_size=payload_size, n_records=n_records, modes=modes)
