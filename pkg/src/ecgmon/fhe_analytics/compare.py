"""Plaintext-vs-encrypted comparison of the four analysis families.

The encrypted R-peak path evaluates a linear-phase FIR bandpass, the
5-point derivative, squaring, and moving-window integration entirely on
ciphertext; the analyst decrypts the integrated waveform plus the window
and applies the same adaptive thresholding used on the plaintext path.
Median, min, max, square roots, and frequency ranking are likewise
finished at the analyst endpoint (comparisons are not computable under
approximate homomorphic arithmetic at practical depth); the evaluator
side never holds a decryption key.

Per-metric similarity uses the symmetric ratio
100 * min(|a|, |b|) / max(|a|, |b|), 100 when both are zero and 0 when
the signs differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ecgmon import dsp
from ecgmon.fhe_analytics.params import HeParams, UnsupportedParams
from ecgmon.fhe_analytics.ops import (
    he_dft,
    he_linear_filter,
    he_mean_var,
    he_square,
    he_sum,
)
from ecgmon.fhe_analytics.scheme import (
    CipherVector,
    Decryptor,
    Encryptor,
    Evaluator,
    keygen,
)

ALL_ANALYSES = ("peaks", "stats", "frequency", "hrv")
DEFAULT_TOP_K = 3
DEFAULT_FREQ_BAND_HZ = 12.0

_DERIV_TAPS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) / 8.0


def comparison_ratio(a: float, b: float) -> float:
    """Symmetric similarity in [0, 100]; 100 iff |a| = |b| with equal signs."""
    if a == 0.0 and b == 0.0:
        return 100.0
    if a == 0.0 or b == 0.0 or (a > 0) != (b > 0):
        return 0.0
    lo, hi = sorted((abs(a), abs(b)))
    # divide first: equal magnitudes must give exactly 100.0
    return 100.0 * (lo / hi)


@dataclass(frozen=True)
class MetricTriple:
    plain: float
    encrypted: float
    ratio_pct: float

    @staticmethod
    def of(plain: float, encrypted: float) -> "MetricTriple":
        return MetricTriple(plain, encrypted, comparison_ratio(plain, encrypted))


@dataclass
class ComparisonReport:
    stats: dict[str, MetricTriple] | None = None
    peaks_plain: list[int] | None = None
    peaks_encrypted: list[int] | None = None
    peak_match_pct: float | None = None
    dominant_plain: list[float] | None = None
    dominant_encrypted: list[float] | None = None
    dominant_match_pct: float | None = None
    hrv_mean: MetricTriple | None = None
    hrv_std: MetricTriple | None = None

    def to_dict(self) -> dict:
        out: dict = {}
        if self.stats is not None:
            out["stats"] = {k: vars(v) for k, v in self.stats.items()}
        if self.peak_match_pct is not None:
            out["peaks"] = {
                "plain": self.peaks_plain,
                "encrypted": self.peaks_encrypted,
                "match_pct": self.peak_match_pct,
            }
        if self.dominant_match_pct is not None:
            out["frequency"] = {
                "plain": self.dominant_plain,
                "encrypted": self.dominant_encrypted,
                "match_pct": self.dominant_match_pct,
            }
        if self.hrv_mean is not None:
            out["hrv"] = {
                "mean_rr": vars(self.hrv_mean),
                "std_rr": vars(self.hrv_std),
            }
        return out


def fir_bandpass_taps(fs: float, low: float = 5.0, high: float = 15.0
                      ) -> np.ndarray:
    """Linear-phase windowed-sinc bandpass for the ciphertext pipeline.

    IIR filters cannot run under homomorphic arithmetic, so the encrypted
    path uses this FIR stand-in for the 5-15 Hz stage; gain is normalized
    at the geometric band center.
    """
    half = max(2, int(round(0.08 * fs)))
    k = np.arange(-half, half + 1)
    taps = (2 * high / fs) * np.sinc(2 * high * k / fs) \
        - (2 * low / fs) * np.sinc(2 * low * k / fs)
    taps *= np.hamming(len(taps))
    f0 = np.sqrt(low * high)
    gain = np.abs(np.sum(taps * np.exp(-2j * np.pi * f0 * k / fs)))
    return taps / gain


def probe_grid(n: int, fs: float, band_hz: float) -> list[float]:
    """DFT bin centers in (0, band_hz] for an n-sample window."""
    max_bin = int(band_hz * n / fs)
    return [k * fs / n for k in range(1, max_bin + 1)]


@dataclass
class EncryptedIntermediates:
    """Server-side outputs, all still ciphertext."""

    window_ct: CipherVector
    n: int
    fs: float
    mean_ct: CipherVector | None = None
    var_ct: CipherVector | None = None
    mwi_ct: CipherVector | None = None
    peak_lead: int = 0
    probes: list[tuple[float, CipherVector, CipherVector]] = field(
        default_factory=list
    )


def run_encrypted_pipeline(ev: Evaluator, window_ct: CipherVector, fs: float,
                           n: int, analyses=ALL_ANALYSES,
                           band_hz: float = DEFAULT_FREQ_BAND_HZ
                           ) -> EncryptedIntermediates:
    """Evaluate every requested analysis family on ciphertext."""
    inter = EncryptedIntermediates(window_ct=window_ct, n=n, fs=fs)
    if "stats" in analyses:
        inter.mean_ct, inter.var_ct = he_mean_var(ev, window_ct, n)
    if "peaks" in analyses or "hrv" in analyses:
        bp_taps = fir_bandpass_taps(fs)
        width = max(1, round(0.150 * fs))
        filtered = he_linear_filter(ev, window_ct, bp_taps)
        deriv = he_linear_filter(ev, filtered, _DERIV_TAPS)
        squared = he_square(ev, deriv)
        inter.mwi_ct = he_linear_filter(ev, squared, np.ones(width) / width)
        # forward FIR stages lead the signal: center taps + derivative + MWI
        inter.peak_lead = (len(bp_taps) - 1) // 2 + 2 + (width - 1) // 2
    if "frequency" in analyses:
        freqs = probe_grid(n, fs, band_hz)
        pairs = he_dft(ev, window_ct, freqs, fs, n)
        inter.probes = [(f, c, s) for f, (c, s) in zip(freqs, pairs)]
    return inter


@dataclass
class AnalysisResults:
    """One path's finished numbers (plaintext or decrypted-and-finished)."""

    stats: dict[str, float] | None = None
    peaks: list[int] | None = None
    dominant: list[float] | None = None
    hrv_mean: float | None = None
    hrv_std: float | None = None


def finish_encrypted(dec: Decryptor, inter: EncryptedIntermediates,
                     analyses=ALL_ANALYSES, top_k: int = DEFAULT_TOP_K
                     ) -> AnalysisResults:
    """Analyst-side finishing: decrypt intermediates, apply comparisons."""
    res = AnalysisResults()
    n, fs = inter.n, inter.fs
    window = None
    if "stats" in analyses or "peaks" in analyses or "hrv" in analyses:
        window = dec.decrypt(inter.window_ct, n)
    if "stats" in analyses:
        mean = float(dec.decrypt(inter.mean_ct, 1)[0])
        var = float(dec.decrypt(inter.var_ct, 1)[0])
        res.stats = {
            "mean": mean,
            "std": float(np.sqrt(max(var, 0.0))),
            "median": float(np.median(window)),
            "min": float(np.min(window)),
            "max": float(np.max(window)),
        }
    if "peaks" in analyses or "hrv" in analyses:
        mwi = dec.decrypt(inter.mwi_ct, n).copy()
        # trailing slots wrapped into zero padding: blank them
        tail = min(n, inter.peak_lead * 2)
        if tail:
            mwi[n - tail :] = 0.0
        accepted = dsp.adaptive_peak_pick(mwi, fs)
        res.peaks = dsp.finalize_peaks(window, accepted, fs,
                                       delay=-inter.peak_lead)
    if "frequency" in analyses:
        mags = []
        for f, cos_ct, sin_ct in inter.probes:
            c = float(dec.decrypt(cos_ct, 1)[0])
            s = float(dec.decrypt(sin_ct, 1)[0])
            mags.append((np.hypot(c, s), f))
        res.dominant = _rank_top_k(mags, top_k)
    if "hrv" in analyses and res.peaks is not None and len(res.peaks) >= 2:
        report = dsp.hrv(res.peaks, fs)
        res.hrv_mean, res.hrv_std = report.mean_rr, report.std_rr
    return res


def run_plaintext(x: np.ndarray, fs: float, analyses=ALL_ANALYSES,
                  top_k: int = DEFAULT_TOP_K,
                  band_hz: float = DEFAULT_FREQ_BAND_HZ) -> AnalysisResults:
    """The reference path on the plaintext window (dsp module)."""
    res = AnalysisResults()
    if "stats" in analyses:
        s = dsp.basic_stats(x)
        res.stats = {"mean": s.mean, "std": s.std, "median": s.median,
                     "min": s.min, "max": s.max}
    if "peaks" in analyses or "hrv" in analyses:
        res.peaks = dsp.pan_tompkins(x, fs)
    if "frequency" in analyses:
        spectrum = np.abs(np.fft.rfft(x))
        mags = []
        for f in probe_grid(len(x), fs, band_hz):
            k = int(round(f * len(x) / fs))
            mags.append((float(spectrum[k]), f))
        res.dominant = _rank_top_k(mags, top_k)
    if "hrv" in analyses and res.peaks is not None and len(res.peaks) >= 2:
        report = dsp.hrv(res.peaks, fs)
        res.hrv_mean, res.hrv_std = report.mean_rr, report.std_rr
    return res


def _rank_top_k(mag_freq_pairs: list[tuple[float, float]], k: int) -> list[float]:
    """Top-k frequencies by magnitude, ties toward lower frequency, ascending."""
    ranked = sorted(mag_freq_pairs, key=lambda p: (-p[0], p[1]))
    return sorted(f for _, f in ranked[:k])


def _set_match_pct(a: list, b: list, digits: int = 9) -> float:
    sa = {round(v, digits) for v in a}
    sb = {round(v, digits) for v in b}
    if not sa and not sb:
        return 100.0
    return 100.0 * len(sa & sb) / max(len(sa), len(sb))


def build_report(plain: AnalysisResults, enc: AnalysisResults
                 ) -> ComparisonReport:
    report = ComparisonReport()
    if plain.stats is not None and enc.stats is not None:
        report.stats = {
            name: MetricTriple.of(plain.stats[name], enc.stats[name])
            for name in ("mean", "std", "median", "min", "max")
        }
    if plain.peaks is not None and enc.peaks is not None:
        report.peaks_plain = list(plain.peaks)
        report.peaks_encrypted = list(enc.peaks)
        report.peak_match_pct = _set_match_pct(plain.peaks, enc.peaks)
    if plain.dominant is not None and enc.dominant is not None:
        report.dominant_plain = list(plain.dominant)
        report.dominant_encrypted = list(enc.dominant)
        report.dominant_match_pct = _set_match_pct(plain.dominant, enc.dominant)
    if plain.hrv_mean is not None and enc.hrv_mean is not None:
        report.hrv_mean = MetricTriple.of(plain.hrv_mean, enc.hrv_mean)
        report.hrv_std = MetricTriple.of(plain.hrv_std, enc.hrv_std)
    return report


def compare_pipelines(window, params: HeParams, analyses=ALL_ANALYSES,
                      seed: int = 0, top_k: int = DEFAULT_TOP_K,
                      band_hz: float = DEFAULT_FREQ_BAND_HZ
                      ) -> ComparisonReport:
    """Run both paths on one window and report per-metric ratios.

    Key generation, encryption, homomorphic evaluation, and analyst
    finishing happen in-process, but through role-separated contexts: the
    Evaluator receives only evaluation keys.
    """
    x = np.asarray(window.samples, dtype=float)
    fs = window.fs
    if len(x) > params.slot_count:
        raise UnsupportedParams(
            f"window of {len(x)} exceeds {params.slot_count} slots"
        )
    keys = keygen(params, seed=seed)
    enc = Encryptor(params, keys.encrypt_key)
    ev = Evaluator(params, keys.eval_keys)
    dec = Decryptor(params, keys.decrypt_key)

    window_ct = enc.encrypt(x)
    inter = run_encrypted_pipeline(ev, window_ct, fs, len(x), analyses, band_hz)
    enc_results = finish_encrypted(dec, inter, analyses, top_k)
    plain_results = run_plaintext(x, fs, analyses, top_k, band_hz)
    return build_report(plain_results, enc_results)
