"""Patient agent: synthesize or replay a signal and stream it securely.

Connects to the gateway's agent port, sends the session prelude, performs
the handshake for the selected key mode, and ships each wire-protocol
chunk as one sealed record (kind = raw frame).
"""

from __future__ import annotations

import argparse
import socket
import struct
import time
from dataclasses import dataclass, field

from ecgmon import secure_channel as sc
from ecgmon import signal_source as ss

_PRELUDE = struct.Struct("<4sBddd")
AGENT_MAGIC = b"EPPA"


@dataclass
class AgentConfig:
    connect: tuple[str, int]
    patient_id: str = "patient-1"
    profile: ss.SynthProfile = field(default_factory=ss.SynthProfile)
    fs: float = 50.0
    duration_s: float = 60.0
    mode: sc.Mode = sc.Mode.ECDH
    psk_hex: str | None = None
    calibration: ss.Calibration = ss.DEFAULT_CALIBRATION
    chunk_s: float = 0.2
    pulse_period_s: float = 1.0
    accelerated: bool = False
    lead_off_at_s: tuple[float, ...] = ()
    replay_bytes: bytes | None = None


@dataclass
class AgentStats:
    records_sent: int = 0
    samples_sent: int = 0
    bytes_sent: int = 0
    chunks: list[bytes] = field(default_factory=list)


def run_agent(config: AgentConfig) -> AgentStats:
    """Stream one session; returns what was sent (for conservation checks)."""
    if config.replay_bytes is not None:
        chunks = [
            (i / 1000.0, config.replay_bytes[i : i + 256])
            for i in range(0, len(config.replay_bytes), 256)
        ]
        fs = config.fs
    else:
        window = ss.synth(config.profile, config.duration_s, config.fs,
                          t0_ms=int(time.time() * 1000))
        cfg = ss.StreamerConfig(
            calibration=config.calibration,
            pulse_period_s=config.pulse_period_s,
            chunk_s=config.chunk_s,
            accelerated=config.accelerated,
            lead_off_at_s=config.lead_off_at_s,
        )
        chunks = list(ss.iter_stream(window, cfg))
        fs = window.fs

    stats = AgentStats()
    sock = socket.create_connection(config.connect)
    try:
        transport = sc.SocketTransport(sock)
        mode_byte = 1 if config.mode is sc.Mode.PRESHARED else 2
        transport.send_all(_PRELUDE.pack(
            AGENT_MAGIC, mode_byte, fs,
            config.calibration.gain, config.calibration.offset,
        ))
        if config.mode is sc.Mode.PRESHARED:
            psk = sc.parse_preshared_secret(config.psk_hex or "")
            key = sc.preshared_handshake(sc.Role.INITIATOR, transport, psk)
        else:
            key = sc.handshake(sc.Role.INITIATOR, transport)

        started = time.monotonic()
        for seq, (t_s, chunk) in enumerate(chunks):
            if not config.accelerated:
                lag = t_s - (time.monotonic() - started)
                if lag > 0:
                    time.sleep(lag)
            header = sc.RecordHeader(
                patient_id=config.patient_id,
                timestamp_ms=int(time.time() * 1000),
                seq=seq,
                kind=sc.RecordKind.RAW_FRAME,
            )
            record = sc.seal(key, header, chunk)
            body = sc.encode_record(record)
            transport.send_all(struct.pack("<I", len(body)) + body)
            stats.records_sent += 1
            stats.bytes_sent += len(body)
            stats.samples_sent += _count_wave_bytes(chunk)
            stats.chunks.append(chunk)
    finally:
        sock.close()
    return stats


def _count_wave_bytes(chunk: bytes) -> int:
    from ecgmon.wire_protocol import decode, FrameKind

    return sum(len(ev.samples) for ev in decode(chunk)
               if ev.kind is FrameKind.WAVE_SAMPLES)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="agent", description="stream a (synthetic) patient signal to a gateway"
    )
    parser.add_argument("--connect", required=True, metavar="HOST:PORT")
    parser.add_argument("--patient", default="patient-1")
    parser.add_argument("--profile", help="synth profile file (key = value)")
    parser.add_argument("--fs", type=float, default=50.0)
    parser.add_argument("--duration", type=float, default=60.0)
    parser.add_argument("--mode", choices=["preshared", "ecdh"], default="ecdh")
    parser.add_argument("--psk-hex", help="64-hex-char pre-shared secret")
    parser.add_argument("--replay", help="raw byte-stream file to replay")
    parser.add_argument("--accelerated", action="store_true",
                        help="disable wall-clock pacing")
    parser.add_argument("--lead-off-at", type=float, action="append",
                        default=[], metavar="SECONDS")
    args = parser.parse_args(argv)

    host, _, port = args.connect.rpartition(":")
    profile = ss.load_profile(args.profile) if args.profile else ss.SynthProfile()
    replay = None
    if args.replay:
        with open(args.replay, "rb") as f:
            replay = f.read()
    config = AgentConfig(
        connect=(host or "127.0.0.1", int(port)),
        patient_id=args.patient,
        profile=profile,
        fs=args.fs,
        duration_s=args.duration,
        mode=sc.Mode(args.mode),
        psk_hex=args.psk_hex,
        accelerated=args.accelerated,
        lead_off_at_s=tuple(args.lead_off_at),
        replay_bytes=replay,
    )
    stats = run_agent(config)
    print(f"sent {stats.records_sent} records, {stats.samples_sent} samples, "
          f"{stats.bytes_sent} bytes")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
