"""Console entry points for the gateway server and the analyst client."""

from __future__ import annotations

import argparse
import json
import socket
import time

from ecgmon import secure_channel as sc
from ecgmon.gateway.server import Gateway, GatewayConfig


def gateway_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gateway")
    parser.add_argument("--listen", default="127.0.0.1:7380",
                        metavar="HOST:PORT", help="agent ingest address")
    parser.add_argument("--api", default="127.0.0.1:7381",
                        metavar="HOST:PORT", help="console/analyst API address")
    parser.add_argument("--store", default="./ecg-store")
    parser.add_argument("--mode", choices=["preshared", "ecdh"], default="ecdh")
    parser.add_argument("--psk-hex")
    parser.add_argument("--model", help="trained classifier model file")
    parser.add_argument("--start-paused", action="store_true")
    args = parser.parse_args(argv)

    host, _, port = args.listen.rpartition(":")
    api_host, _, api_port = args.api.rpartition(":")
    config = GatewayConfig(
        host=host or "127.0.0.1",
        agent_port=int(port),
        api_port=int(api_port),
        store_dir=args.store,
        mode=sc.Mode(args.mode),
        psk_hex=args.psk_hex,
        model_path=args.model,
        start_paused=args.start_paused,
    )
    gateway = Gateway(config)
    gateway.start()
    print(f"gateway: agents on {gateway.agent_addr}, api on {gateway.api_addr}, "
          f"store in {args.store}")
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        gateway.stop()
    return 0


class ApiClient:
    """Line-oriented JSON client for the gateway API socket."""

    def __init__(self, addr: tuple[str, int]):
        self._sock = socket.create_connection(addr)
        self._rfile = self._sock.makefile("rb")
        self._next_id = 0

    def call(self, op: str, params: dict | None = None):
        self._next_id += 1
        msg = {"op": op, "params": params or {}, "id": self._next_id}
        self._sock.sendall(json.dumps(msg).encode() + b"\n")
        reply = json.loads(self._rfile.readline())
        if not reply.get("ok"):
            raise RuntimeError(reply.get("error", "request failed"))
        return reply["result"]

    def stream(self, patient_id: str):
        """Subscribe and yield events until the connection closes."""
        msg = {"op": "stream.subscribe", "params": {"patient_id": patient_id},
               "id": 0}
        self._sock.sendall(json.dumps(msg).encode() + b"\n")
        ack = json.loads(self._rfile.readline())
        if not ack.get("ok"):
            raise RuntimeError(ack.get("error", "subscribe failed"))
        for line in self._rfile:
            if line.strip():
                yield json.loads(line)

    def close(self) -> None:
        self._sock.close()


def _render_report(report: dict) -> str:
    lines = [
        f"analysis report: patient={report['patient_id']} "
        f"mode={report['mode']} range=[{report['t0_ms']}, {report['t1_ms']}] "
        f"n={report['n_samples']} fs={report['fs']}",
    ]
    comparison = report.get("comparison")
    if comparison:
        if "stats" in comparison:
            lines.append(f"  {'metric':10} {'plaintext':>14} {'encrypted':>14} {'ratio %':>9}")
            for name, row in comparison["stats"].items():
                lines.append(
                    f"  {name:10} {row['plain']:>14.6g} "
                    f"{row['encrypted']:>14.6g} {row['ratio_pct']:>9.2f}"
                )
        if "peaks" in comparison:
            lines.append(f"  r-peak match: {comparison['peaks']['match_pct']:.2f}%"
                         f" ({len(comparison['peaks']['plain'])} peaks)")
        if "frequency" in comparison:
            f = comparison["frequency"]
            lines.append(f"  dominant freqs: plain {f['plain']} "
                         f"encrypted {f['encrypted']} match {f['match_pct']:.2f}%")
        if "hrv" in comparison:
            h = comparison["hrv"]
            lines.append(
                f"  hrv mean RR: {h['mean_rr']['plain']:.4f} vs "
                f"{h['mean_rr']['encrypted']:.4f} s (ratio {h['mean_rr']['ratio_pct']:.2f}%)"
            )
            lines.append(
                f"  hrv std RR:  {h['std_rr']['plain']:.4f} vs "
                f"{h['std_rr']['encrypted']:.4f} s (ratio {h['std_rr']['ratio_pct']:.2f}%)"
            )
    else:
        lines.append(json.dumps(report["results"], indent=2))
    return "\n".join(lines)


def analyst_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="analyst")
    parser.add_argument("--gateway", default="127.0.0.1:7381",
                        metavar="HOST:PORT", help="gateway API address")
    parser.add_argument("--patient", required=True)
    parser.add_argument("--range", required=True, metavar="T0,T1",
                        help="timestamp range in ms since epoch")
    parser.add_argument("--analyses", default="peaks,stats,frequency,hrv")
    parser.add_argument("--mode", choices=["plaintext", "encrypted", "compare"],
                        default="compare")
    parser.add_argument("--json", action="store_true", help="raw JSON output")
    args = parser.parse_args(argv)

    host, _, port = args.gateway.rpartition(":")
    t0, _, t1 = args.range.partition(",")
    client = ApiClient((host or "127.0.0.1", int(port)))
    try:
        report = client.call("analysis.run", {
            "patient_id": args.patient,
            "t0_ms": int(t0),
            "t1_ms": int(t1),
            "analyses": [a.strip() for a in args.analyses.split(",") if a.strip()],
            "mode": args.mode,
        })
    finally:
        client.close()
    print(json.dumps(report, indent=2) if args.json else _render_report(report))
    return 0
