"""Plaintext signal analysis.

Butterworth bandpass design via the analog prototype (frequency
pre-warping + bilinear transform), zero-phase forward/backward filtering,
Pan-Tompkins R-peak detection, basic statistics, dominant-frequency
ranking, and RR-interval (HRV) summaries.

Conventions used throughout the package:
  * cutoffs are normalized against the Nyquist rate (0.5 * fs)
  * standard deviations are population (divisor N)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UnstableDesign(ValueError):
    """Designed denominator has a root on or outside the unit circle."""


class InputTooShort(ValueError):
    """Signal shorter than the zero-phase padding requires."""


class EmptyInput(ValueError):
    pass


class TooFewPeaks(ValueError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    order: int
    lowcut: float
    highcut: float
    fs: float

    def validate(self) -> None:
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        nyquist = 0.5 * self.fs
        if not (0.0 < self.lowcut < self.highcut < nyquist):
            raise ValueError(
                f"need 0 < lowcut < highcut < fs/2, got "
                f"({self.lowcut}, {self.highcut}) at fs={self.fs}"
            )


@dataclass(frozen=True)
class FilterCoefficients:
    b: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class StatsReport:
    mean: float
    std: float
    median: float
    min: float
    max: float


@dataclass(frozen=True)
class HrvReport:
    rr_intervals: list[float]
    mean_rr: float
    std_rr: float


def design_bandpass(spec: FilterSpec) -> FilterCoefficients:
    """Digital Butterworth bandpass of the given order.

    Cutoffs are normalized by the Nyquist rate, pre-warped onto the analog
    axis, the analog lowpass prototype is transformed to a bandpass, and
    the bilinear transform maps it back to z.  The -3 dB points land
    exactly on the requested cutoffs (that is what pre-warping buys).
    """
    spec.validate()
    n = spec.order
    nyquist = 0.5 * spec.fs
    low = spec.lowcut / nyquist
    high = spec.highcut / nyquist

    # pre-warp normalized cutoffs (digital design at fs = 2)
    fs2 = 2.0
    warped_low = 2.0 * fs2 * math.tan(math.pi * low / fs2)
    warped_high = 2.0 * fs2 * math.tan(math.pi * high / fs2)
    w0 = math.sqrt(warped_low * warped_high)
    bw = warped_high - warped_low

    # analog Butterworth lowpass prototype: poles on the unit circle, LHP
    m = np.arange(-n + 1, n, 2)
    p_lp = -np.exp(1j * np.pi * m / (2 * n))
    k_lp = 1.0

    # lowpass -> bandpass: each pole splits in two, n zeros at the origin
    p_scaled = p_lp * bw / 2.0
    root = np.sqrt(p_scaled**2 - w0**2)
    p_bp = np.concatenate((p_scaled + root, p_scaled - root))
    z_bp = np.zeros(n)
    k_bp = k_lp * bw**n

    # bilinear transform at fs = 2; zeros at infinity land on z = -1
    fs4 = 2.0 * fs2
    z_z = (fs4 + z_bp) / (fs4 - z_bp)
    p_z = (fs4 + p_bp) / (fs4 - p_bp)
    z_z = np.concatenate((z_z, -np.ones(len(p_z) - len(z_z))))
    k_z = k_bp * np.real(np.prod(fs4 - z_bp) / np.prod(fs4 - p_bp))

    b = np.real(k_z * np.poly(z_z))
    a = np.real(np.poly(p_z))

    roots = np.roots(a)
    if np.max(np.abs(roots)) >= 1.0 - 1e-12:
        raise UnstableDesign(
            f"pole radius {np.max(np.abs(roots)):.12f} for spec {spec}"
        )
    return FilterCoefficients(b=b, a=a)


def lfilter(b, a, x, zi=None):
    """IIR filter, direct form II transposed, optional initial state.

    Returns (y, zf).  a[0] must be nonzero; coefficients are normalized.
    """
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if a[0] == 0:
        raise ValueError("a[0] must be nonzero")
    b, a = b / a[0], a / a[0]
    n = max(len(a), len(b))
    b = np.concatenate((b, np.zeros(n - len(b))))
    a = np.concatenate((a, np.zeros(n - len(a))))
    z = np.zeros(n - 1) if zi is None else np.array(zi, dtype=float)
    y = np.empty_like(x)
    for i in range(len(x)):
        xn = x[i]
        yn = b[0] * xn + z[0]
        for k in range(n - 2):
            z[k] = b[k + 1] * xn + z[k + 1] - a[k + 1] * yn
        z[n - 2] = b[n - 1] * xn - a[n - 1] * yn
        y[i] = yn
    return y, z


def lfilter_zi(b, a) -> np.ndarray:
    """Steady-state initial conditions for a unit step input."""
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    b, a = b / a[0], a / a[0]
    n = max(len(a), len(b))
    b = np.concatenate((b, np.zeros(n - len(b))))
    a = np.concatenate((a, np.zeros(n - len(a))))
    # companion form of the DF2T state update: z = A z + B x
    A = np.zeros((n - 1, n - 1))
    A[:, 0] = -a[1:]
    A[:-1, 1:] = np.eye(n - 2)
    B = b[1:] - b[0] * a[1:]
    return np.linalg.solve(np.eye(n - 1) - A, B)


def filtfilt(coeffs: FilterCoefficients, x) -> np.ndarray:
    """Zero-phase filtering: forward pass, backward pass.

    Edges are handled with an odd (reflect-and-negate) extension of length
    3 * (max(len(a), len(b)) - 1) plus steady-state initial conditions, so
    transients do not leak into the output.  Magnitude response is |H|^2.
    """
    b, a = coeffs.b, coeffs.a
    x = np.asarray(x, dtype=float)
    pad = 3 * (max(len(a), len(b)) - 1)
    if len(x) <= pad:
        raise InputTooShort(f"need more than {pad} samples, got {len(x)}")
    front = 2.0 * x[0] - x[pad:0:-1]
    back = 2.0 * x[-1] - x[-2 : -pad - 2 : -1]
    ext = np.concatenate((front, x, back))

    zi = lfilter_zi(b, a)
    y, _ = lfilter(b, a, ext, zi=zi * ext[0])
    y = y[::-1]
    y, _ = lfilter(b, a, y, zi=zi * y[0])
    y = y[::-1]
    return y[pad : len(y) - pad]


def bandpass_filter(x, lowcut: float, highcut: float, fs: float, order: int = 2):
    """Design + zero-phase apply in one call."""
    coeffs = design_bandpass(FilterSpec(order, lowcut, highcut, fs))
    return filtfilt(coeffs, x)


# -- Pan-Tompkins ------------------------------------------------------------

# adaptive threshold blends, classic values
_LEVEL_BLEND = 0.125
_SEARCHBACK_BLEND = 0.25
_REFRACTORY_S = 0.200
_DERIV_KERNEL = np.array([2.0, 1.0, 0.0, -1.0, -2.0]) / 8.0


def pan_tompkins(x, fs: float) -> list[int]:
    """R-peak indices via bandpass, derivative, squaring, integration.

    Stages: 5-15 Hz order-2 bandpass (zero phase), 5-point derivative,
    pointwise square, moving-window integration of width round(0.150*fs),
    adaptive dual-threshold peak picking with a 200 ms refractory period
    and RR-gap search-back.  Indices refer to the original signal: stage
    group delay is compensated and each detection snaps to the local
    maximum of the input.
    """
    x = np.asarray(x, dtype=float)
    if fs <= 0:
        raise ValueError("fs must be positive")
    if len(x) < int(2 * fs):
        raise ValueError("need at least 2 s of data")

    filtered = bandpass_filter(x, 5.0, 15.0, fs, order=2)
    deriv = np.convolve(filtered, _DERIV_KERNEL)[: len(x)]
    squared = deriv * deriv
    width = max(1, round(0.150 * fs))
    mwi = np.convolve(squared, np.ones(width) / width)[: len(x)]
    # causal delays: derivative 2 samples, integration (width-1)/2
    delay = 2 + (width - 1) // 2
    accepted = adaptive_peak_pick(mwi, fs)
    return finalize_peaks(x, accepted, fs, delay)


def adaptive_peak_pick(mwi, fs: float) -> list[int]:
    """Dual-threshold candidate selection on an integrated waveform.

    Signal/noise levels are seeded from the first 2 s (0.25*max and
    0.5*mean), updated with the classic 0.125/0.875 blend; the working
    threshold is noise + 0.25*(signal - noise) with a 200 ms refractory
    period and RR-gap search-back against half the threshold.  Returns
    accepted indices into mwi.
    """
    mwi = np.asarray(mwi, dtype=float)
    refractory = int(round(_REFRACTORY_S * fs))
    init = mwi[: int(2 * fs)]
    spki = 0.25 * float(np.max(init))
    npki = 0.5 * float(np.mean(init))

    # strict local maxima of the integrated waveform
    rising = mwi[1:-1] > mwi[:-2]
    falling = mwi[1:-1] >= mwi[2:]
    cand = np.nonzero(rising & falling)[0] + 1

    accepted: list[int] = []
    rr_history: list[int] = []

    def threshold1() -> float:
        return npki + 0.25 * (spki - npki)

    def rr_average() -> float:
        if not rr_history:
            return 0.0
        return float(np.mean(rr_history[-8:]))

    def accept(idx: int, blend: float) -> None:
        nonlocal spki
        spki = blend * mwi[idx] + (1.0 - blend) * spki
        if accepted:
            rr_history.append(idx - accepted[-1])
        accepted.append(idx)

    for i in cand:
        if accepted and i - accepted[-1] < refractory:
            continue
        if mwi[i] > threshold1():
            # search-back: a long gap suggests a missed beat below T1
            rr_avg = rr_average()
            if rr_avg and accepted and (i - accepted[-1]) > 1.66 * rr_avg:
                lo = accepted[-1] + refractory
                missed = [
                    j for j in cand
                    if lo <= j < i - refractory and mwi[j] > 0.5 * threshold1()
                ]
                if missed:
                    accept(max(missed, key=lambda j: mwi[j]), _SEARCHBACK_BLEND)
            accept(int(i), _LEVEL_BLEND)
        else:
            npki = _LEVEL_BLEND * mwi[i] + (1.0 - _LEVEL_BLEND) * npki
    return accepted


def finalize_peaks(x, mwi_peaks, fs: float, delay: int) -> list[int]:
    """Map integrated-waveform peaks back onto the source signal.

    Compensates the stage delay, snaps each detection to the local maximum
    of x within +-100 ms, and enforces strict increase plus the 0.2*fs
    refractory spacing on the result.
    """
    x = np.asarray(x, dtype=float)
    radius = max(1, int(round(0.100 * fs)))
    refractory = int(round(_REFRACTORY_S * fs))
    out: list[int] = []
    for i in mwi_peaks:
        center = i - delay
        lo = max(0, center - radius)
        hi = min(len(x), center + radius + 1)
        if lo >= hi:
            continue
        idx = lo + int(np.argmax(x[lo:hi]))
        if out and idx - out[-1] < refractory:
            continue
        out.append(idx)
    return out


# -- statistics / frequency / HRV --------------------------------------------


def basic_stats(x) -> StatsReport:
    """Mean, population std, median, min, max."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EmptyInput("basic_stats of empty vector")
    return StatsReport(
        mean=float(np.mean(x)),
        std=float(np.std(x)),
        median=float(np.median(x)),
        min=float(np.min(x)),
        max=float(np.max(x)),
    )


def dominant_frequencies(x, fs: float, k: int) -> list[float]:
    """The k bin-center frequencies with largest DFT magnitude.

    DC is excluded, ties break toward the lower frequency, and the result
    is ascending.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise EmptyInput("need at least 2 samples")
    if k < 1:
        raise ValueError("k must be >= 1")
    mags = np.abs(np.fft.rfft(x))[1:]
    freqs = np.fft.rfftfreq(len(x), d=1.0 / fs)[1:]
    order = np.lexsort((freqs, -mags))
    top = freqs[order[: min(k, len(freqs))]]
    return sorted(float(f) for f in top)


def hrv(peaks, fs: float) -> HrvReport:
    """RR intervals between consecutive peaks plus mean/population std."""
    peaks = list(peaks)
    if len(peaks) < 2:
        raise TooFewPeaks(f"need >= 2 peaks, got {len(peaks)}")
    rr = np.diff(np.asarray(peaks, dtype=float)) / fs
    return HrvReport(
        rr_intervals=[float(v) for v in rr],
        mean_rr=float(np.mean(rr)),
        std_rr=float(np.std(rr)),
    )
