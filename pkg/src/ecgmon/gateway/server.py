"""The gateway process.

Two listeners: a binary agent port (handshake prelude, then length-framed
cipher records) and a JSON-line API port serving session.list,
session.control, analysis.run, and stream.subscribe (which turns the
connection into a one-way JSON-line event stream).

Agent connection prelude (little-endian, cleartext session metadata):

    magic "EPPA" | mode u8 (1 = preshared, 2 = ecdh) | fs f64 |
    calibration gain f64 | calibration offset f64

followed by the secure_channel handshake for the chosen mode, then
records framed as u32 length + record bytes.
"""

from __future__ import annotations

import json
import queue
import socket
import struct
import threading
from dataclasses import dataclass, field as dc_field

from ecgmon import secure_channel as sc
from ecgmon.classifier import CnnModel, load_model
from ecgmon.fhe_analytics import HeParams
from ecgmon.gateway.analysis import (
    AnalysisMode,
    AnalysisRequest,
    EmptyRange,
    reconstruct_window,
    run_analysis,
)
from ecgmon.gateway.session import SessionState
from ecgmon.signal_source import Calibration
from ecgmon.store import RecordLog

AGENT_MAGIC = b"EPPA"
_PRELUDE = struct.Struct("<4sBddd")


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    agent_port: int = 0          # 0 = ephemeral
    api_port: int = 0
    store_dir: str = "./ecg-store"
    mode: sc.Mode = sc.Mode.ECDH
    psk_hex: str | None = None
    buffer_s: float = 10.0
    hop_s: float = 2.0
    stream_rate_hz: float = 25.0
    start_paused: bool = False
    he_params: HeParams = dc_field(default_factory=HeParams)
    model_path: str | None = None
    display_band: tuple[float, float] = (0.5, 40.0)


class Gateway:
    """Accepts agent sessions, serves the console API, owns the store."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.store = RecordLog(config.store_dir)
        self.model: CnnModel | None = None
        if config.model_path:
            self.model = load_model(config.model_path)
        self._sessions: dict[str, SessionState] = {}
        self._session_keys: dict[str, list[sc.SessionKey]] = {}
        self._subscribers: dict[str, list[queue.Queue]] = {}
        self._lock = threading.RLock()
        self._threads: list[threading.Thread] = []
        self._closing = threading.Event()
        self._agent_sock: socket.socket | None = None
        self._api_sock: socket.socket | None = None
        self.agent_addr: tuple[str, int] | None = None
        self.api_addr: tuple[str, int] | None = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._agent_sock = self._listen(self.config.agent_port)
        self._api_sock = self._listen(self.config.api_port)
        self.agent_addr = self._agent_sock.getsockname()
        self.api_addr = self._api_sock.getsockname()
        self._spawn(self._accept_loop, self._agent_sock, self._handle_agent)
        self._spawn(self._accept_loop, self._api_sock, self._handle_api)

    def stop(self) -> None:
        self._closing.set()
        for sock in (self._agent_sock, self._api_sock):
            if sock is not None:
                try:
                    sock.close()
                except OSError:
                    pass
        for t in self._threads:
            t.join(timeout=2.0)
        self.store.flush()
        self.store.close()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    def _listen(self, port: int) -> socket.socket:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.config.host, port))
        sock.listen(16)
        return sock

    def _spawn(self, fn, *args) -> None:
        t = threading.Thread(target=fn, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self, listener: socket.socket, handler) -> None:
        while not self._closing.is_set():
            try:
                conn, _ = listener.accept()
            except OSError:
                return
            self._spawn(handler, conn)

    # -- agent sessions ---------------------------------------------------------

    def _handle_agent(self, conn: socket.socket) -> None:
        transport = sc.SocketTransport(conn)
        state: SessionState | None = None
        try:
            raw = transport.recv_exact(_PRELUDE.size)
            magic, mode_byte, fs, gain, offset = _PRELUDE.unpack(raw)
            if magic != AGENT_MAGIC:
                return
            calibration = Calibration(gain=gain, offset=offset)
            if mode_byte == 1:
                if not self.config.psk_hex:
                    return
                psk = sc.parse_preshared_secret(self.config.psk_hex)
                key = sc.preshared_handshake(sc.Role.RESPONDER, transport, psk)
            else:
                key = sc.handshake(sc.Role.RESPONDER, transport)

            while not self._closing.is_set():
                try:
                    head = transport.recv_exact(4)
                except sc.TransportClosed:
                    break
                (length,) = struct.unpack("<I", head)
                body = transport.recv_exact(length)
                record, _ = sc.decode_record(body)
                plaintext = sc.open_record(key, record)  # AuthFailure aborts
                if state is None:
                    state = self._register_session(record.patient_id, key,
                                                   fs, calibration)
                if not state.running:
                    continue
                offset_in_log = self.store.append(record)
                self.store.flush()
                stored = self.store.read_at(offset_in_log)
                stored_plain = sc.open_record(key, stored)
                if record.kind is sc.RecordKind.RAW_FRAME:
                    pairs = state.ingest_plaintext(plaintext, stored_plain,
                                                   record.timestamp_ms)
                    if state.hop_due():
                        state.run_hop()
                    self._publish_pairs(state, pairs)
        except (sc.AuthFailure, sc.ConfirmFailure, sc.TransportClosed,
                ValueError):
            pass
        finally:
            if state is not None:
                state.finalize()
            conn.close()

    def _register_session(self, patient_id: str, key: sc.SessionKey,
                          fs: float, calibration: Calibration) -> SessionState:
        with self._lock:
            state = SessionState(
                patient_id=patient_id,
                session_id_hex=key.session_id.hex(),
                fs=fs,
                calibration=calibration,
                buffer_s=self.config.buffer_s,
                hop_s=self.config.hop_s,
                model=self.model,
                display_band=self.config.display_band,
                running=not self.config.start_paused,
            )
            self._sessions[patient_id] = state
            self._session_keys.setdefault(patient_id, []).append(key)
            return state

    def _publish_pairs(self, state: SessionState,
                       pairs: list[tuple[int, float, float]]) -> None:
        with self._lock:
            queues = list(self._subscribers.get(state.patient_id, ()))
        if not queues:
            return
        step = max(1, int(round(state.fs / self.config.stream_rate_hz)))
        snap = state.snapshot()
        for i in range(0, len(pairs), step):
            t_ms, live, stored = pairs[i]
            event = {
                "t": t_ms,
                "raw": live,
                "decrypted": stored,
                "class": snap.predicted_class,
                "pulse": snap.pulse_bpm,
                "latency_ms": snap.latency_ms,
                "count": snap.processed_count,
                "lead_off": snap.lead_off,
            }
            for q in queues:
                try:
                    q.put_nowait(event)
                except queue.Full:
                    pass

    # -- console / analyst API ----------------------------------------------------

    def _handle_api(self, conn: socket.socket) -> None:
        rfile = conn.makefile("rb")
        wfile = conn.makefile("wb")
        try:
            for line in rfile:
                line = line.strip()
                if not line:
                    continue
                try:
                    msg = json.loads(line)
                    op = msg.get("op")
                    params = msg.get("params") or {}
                    if op == "stream.subscribe":
                        self._serve_stream(wfile, msg, params)
                        return
                    result = self._dispatch(op, params)
                    reply = {"id": msg.get("id"), "ok": True, "result": result}
                except Exception as exc:  # errors go to the client verbatim
                    reply = {"id": msg.get("id") if isinstance(msg, dict) else None,
                             "ok": False,
                             "error": f"{type(exc).__name__}: {exc}"}
                wfile.write(json.dumps(reply).encode() + b"\n")
                wfile.flush()
        except (OSError, ValueError):
            pass
        finally:
            conn.close()

    def _dispatch(self, op: str, params: dict):
        if op == "session.list":
            return self.session_list()
        if op == "session.control":
            return self.session_control(params["patient_id"], params["action"])
        if op == "analysis.run":
            return self.analyze(AnalysisRequest.from_dict(params))
        raise ValueError(f"unknown op {op!r}")

    def _serve_stream(self, wfile, msg, params) -> None:
        patient_id = params["patient_id"]
        q: queue.Queue = queue.Queue(maxsize=4096)
        with self._lock:
            self._subscribers.setdefault(patient_id, []).append(q)
        try:
            wfile.write(json.dumps(
                {"id": msg.get("id"), "ok": True,
                 "result": {"subscribed": patient_id}}
            ).encode() + b"\n")
            wfile.flush()
            while not self._closing.is_set():
                try:
                    event = q.get(timeout=0.5)
                except queue.Empty:
                    continue
                wfile.write(json.dumps(event).encode() + b"\n")
                wfile.flush()
        except (OSError, ValueError):
            pass
        finally:
            with self._lock:
                subs = self._subscribers.get(patient_id, [])
                if q in subs:
                    subs.remove(q)

    # -- operations ---------------------------------------------------------------

    def session_list(self) -> list[dict]:
        with self._lock:
            return [s.snapshot().to_dict() for s in self._sessions.values()]

    def session_control(self, patient_id: str, action: str) -> dict:
        with self._lock:
            state = self._sessions.get(patient_id)
            if state is None:
                raise ValueError(f"unknown patient {patient_id!r}")
            already = False
            if action == "start":
                already = state.running
                state.running = True
            elif action == "stop":
                already = not state.running
                state.running = False
            elif action == "filter_on":
                already = state.filter_enabled
                state.filter_enabled = True
            elif action == "filter_off":
                already = not state.filter_enabled
                state.filter_enabled = False
            else:
                raise ValueError(f"unknown action {action!r}")
            return {"patient_id": patient_id, "running": state.running,
                    "filter_enabled": state.filter_enabled, "already": already}

    def analyze(self, request: AnalysisRequest) -> dict:
        request.validate()
        records = self.store.query(request.patient_id, request.t0_ms,
                                   request.t1_ms)
        if not records:
            raise EmptyRange(
                f"no records for {request.patient_id!r} in "
                f"[{request.t0_ms}, {request.t1_ms}]"
            )
        with self._lock:
            keys = list(self._session_keys.get(request.patient_id, ()))
            state = self._sessions.get(request.patient_id)
        if not keys:
            raise sc.AuthFailure(f"no session keys for {request.patient_id!r}")
        fs = state.fs if state else 50.0
        calibration = state.calibration if state else Calibration()
        window = reconstruct_window(records, keys, fs, calibration)
        return run_analysis(window, request, self.config.he_params)
