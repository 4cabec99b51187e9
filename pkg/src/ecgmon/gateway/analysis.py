"""Analysis requests over stored records.

Plaintext mode decrypts the stored raw-frame records, rebuilds the signal
window, and runs the plaintext operations.  Encrypted mode encrypts the
window under a fresh keyset and evaluates the homomorphic pipeline; the
evaluator role receives only evaluation keys, mirroring a server that
cannot decrypt, and finishing steps run in the analyst role.  Compare
mode runs both and attaches the per-metric ratio report.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ecgmon import dsp
from ecgmon.fhe_analytics import HeParams, compare_pipelines
from ecgmon.fhe_analytics.compare import (
    ALL_ANALYSES,
    AnalysisResults,
    DEFAULT_FREQ_BAND_HZ,
    DEFAULT_TOP_K,
    finish_encrypted,
    run_encrypted_pipeline,
    run_plaintext,
)
from ecgmon.fhe_analytics.scheme import Decryptor, Encryptor, Evaluator, keygen
from ecgmon.secure_channel import (
    AuthFailure,
    CipherRecord,
    RecordKind,
    SessionKey,
    open_record,
)
from ecgmon.signal_source import Calibration, SignalWindow
from ecgmon.wire_protocol import Decoder, FrameKind


class EmptyRange(ValueError):
    """No records in the requested range."""


class AnalysisMode(enum.Enum):
    PLAINTEXT = "plaintext"
    ENCRYPTED = "encrypted"
    COMPARE = "compare"


@dataclass(frozen=True)
class AnalysisRequest:
    patient_id: str
    t0_ms: int
    t1_ms: int
    analyses: tuple[str, ...] = ALL_ANALYSES
    mode: AnalysisMode = AnalysisMode.COMPARE

    def validate(self) -> None:
        if not self.analyses:
            raise ValueError("analyses must be non-empty")
        unknown = set(self.analyses) - set(ALL_ANALYSES)
        if unknown:
            raise ValueError(f"unknown analyses: {sorted(unknown)}")
        if self.t0_ms > self.t1_ms:
            raise ValueError("t0 must be <= t1")

    @staticmethod
    def from_dict(d: dict) -> "AnalysisRequest":
        req = AnalysisRequest(
            patient_id=d["patient_id"],
            t0_ms=int(d["t0_ms"]),
            t1_ms=int(d["t1_ms"]),
            analyses=tuple(d.get("analyses") or ALL_ANALYSES),
            mode=AnalysisMode(d.get("mode", "compare")),
        )
        req.validate()
        return req


def reconstruct_window(records: list[CipherRecord], keys: list[SessionKey],
                       fs: float, calibration: Calibration) -> SignalWindow:
    """Decrypt raw-frame records and rebuild the contiguous sample window.

    Records carry no session id, so each record is opened by trying the
    patient's known session keys (newest first).
    """
    if not records:
        raise EmptyRange("no records in range")
    decoder = Decoder()
    samples: list[float] = []
    t0_ms = records[0].timestamp_ms
    key_order = list(reversed(keys))
    for record in records:
        if record.kind is not RecordKind.RAW_FRAME:
            continue
        plaintext = None
        for key in key_order:
            try:
                plaintext = open_record(key, record)
                break
            except AuthFailure:
                continue
        if plaintext is None:
            raise AuthFailure(
                f"no session key opens record seq={record.seq} for "
                f"patient {record.patient_id!r}"
            )
        for ev in decoder.feed(plaintext):
            if ev.kind is FrameKind.WAVE_SAMPLES:
                samples.extend(calibration.to_amplitude(list(ev.samples)))
    for ev in decoder.flush():
        if ev.kind is FrameKind.WAVE_SAMPLES:
            samples.extend(calibration.to_amplitude(list(ev.samples)))
    if not samples:
        raise EmptyRange("range contains no wave samples")
    return SignalWindow(samples=np.asarray(samples, dtype=float), fs=fs,
                        t0_ms=t0_ms)


def _results_dict(res: AnalysisResults, analyses) -> dict:
    out: dict = {}
    if "stats" in analyses and res.stats is not None:
        out["stats"] = dict(res.stats)
    if "peaks" in analyses and res.peaks is not None:
        out["peaks"] = list(res.peaks)
    if "frequency" in analyses and res.dominant is not None:
        out["frequency"] = list(res.dominant)
    if "hrv" in analyses and res.hrv_mean is not None:
        out["hrv"] = {"mean_rr": res.hrv_mean, "std_rr": res.hrv_std}
    return out


def run_analysis(window: SignalWindow, request: AnalysisRequest,
                 params: HeParams, seed: int = 0) -> dict:
    """Produce the AnalysisReport body for one reconstructed window."""
    analyses = request.analyses
    report: dict = {
        "patient_id": request.patient_id,
        "t0_ms": request.t0_ms,
        "t1_ms": request.t1_ms,
        "mode": request.mode.value,
        "fs": window.fs,
        "n_samples": len(window.samples),
        "results": {},
    }
    x = np.asarray(window.samples, dtype=float)

    if request.mode is AnalysisMode.PLAINTEXT:
        res = run_plaintext(x, window.fs, analyses)
        # plaintext-only frequency ranking covers the full spectrum
        if "frequency" in analyses:
            res.dominant = dsp.dominant_frequencies(x, window.fs, DEFAULT_TOP_K)
        report["results"]["plain"] = _results_dict(res, analyses)
        return report

    if request.mode is AnalysisMode.ENCRYPTED:
        keys = keygen(params, seed=seed)
        enc = Encryptor(params, keys.encrypt_key)
        ev = Evaluator(params, keys.eval_keys)
        dec = Decryptor(params, keys.decrypt_key)
        inter = run_encrypted_pipeline(ev, enc.encrypt(x), window.fs, len(x),
                                       analyses, DEFAULT_FREQ_BAND_HZ)
        res = finish_encrypted(dec, inter, analyses, DEFAULT_TOP_K)
        report["results"]["encrypted"] = _results_dict(res, analyses)
        return report

    comparison = compare_pipelines(window, params, analyses, seed=seed)
    comp_dict = comparison.to_dict()
    report["comparison"] = comp_dict
    plain = AnalysisResults(
        stats={k: v["plain"] for k, v in comp_dict.get("stats", {}).items()}
        if comparison.stats else None,
        peaks=comparison.peaks_plain,
        dominant=comparison.dominant_plain,
        hrv_mean=comparison.hrv_mean.plain if comparison.hrv_mean else None,
        hrv_std=comparison.hrv_std.plain if comparison.hrv_std else None,
    )
    encres = AnalysisResults(
        stats={k: v["encrypted"] for k, v in comp_dict.get("stats", {}).items()}
        if comparison.stats else None,
        peaks=comparison.peaks_encrypted,
        dominant=comparison.dominant_encrypted,
        hrv_mean=comparison.hrv_mean.encrypted if comparison.hrv_mean else None,
        hrv_std=comparison.hrv_std.encrypted if comparison.hrv_std else None,
    )
    report["results"]["plain"] = _results_dict(plain, analyses)
    report["results"]["encrypted"] = _results_dict(encres, analyses)
    return report
