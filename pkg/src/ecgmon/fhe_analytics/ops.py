"""Server-side homomorphic building blocks.

Everything here takes an Evaluator (evaluation keys only) and ciphertext
vectors; nothing can decrypt.  Results follow the plaintext operations
within the scheme's error budget.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ecgmon.fhe_analytics.scheme import CipherVector, Evaluator


def he_sum(ev: Evaluator, ct: CipherVector, n: int) -> CipherVector:
    """Rotation-and-add tree; slot 0 of the result holds sum(x[:n]).

    Slots beyond the logical length are zero, so the full-ring tree sums
    exactly the encrypted vector.  Noise grows with log2(slot_count).
    """
    if n > ct.logical_len:
        raise ValueError(f"n={n} exceeds logical length {ct.logical_len}")
    total = ct
    shift = 1
    while shift < ev.params.slot_count:
        total = ev.add(total, ev.rotate(total, shift))
        shift *= 2
    return replace(total, logical_len=1)


def he_mean_var(ev: Evaluator, ct: CipherVector, n: int
                ) -> tuple[CipherVector, CipherVector]:
    """Homomorphic mean and population variance (scalars in slot 0).

    variance = sum(x^2)/n - mean^2; consumes one multiplicative level.
    The client takes the square root after decryption for the std.
    """
    inv_n = 1.0 / n
    mean = ev.mul_plain(he_sum(ev, ct, n), inv_n)
    ex2 = ev.mul_plain(he_sum(ev, he_square(ev, ct), n), inv_n)
    var = ev.sub(ex2, ev.mul(mean, mean))
    return mean, var


def he_square(ev: Evaluator, ct: CipherVector) -> CipherVector:
    """Slotwise square with one rescale; level decrements."""
    return ev.square(ct)


def he_linear_filter(ev: Evaluator, ct: CipherVector, taps) -> CipherVector:
    """FIR in slots: result[i] = sum_j taps[j] * x[i + j].

    Built from incremental rotate-by-one steps, so only interior slots
    (i <= n - len(taps)) are meaningful; the tail wraps into zero padding.
    Plaintext taps cost no multiplicative depth.
    """
    taps = np.asarray(taps, dtype=float)
    if taps.size == 0:
        raise ValueError("taps must be non-empty")
    acc = ev.mul_plain(ct, float(taps[0]))
    shifted = ct
    for tap in taps[1:]:
        shifted = ev.rotate(shifted, 1)
        if tap != 0.0:
            acc = ev.add(acc, ev.mul_plain(shifted, float(tap)))
    return acc


def he_dft(ev: Evaluator, ct: CipherVector, freqs, fs: float, n: int
           ) -> list[tuple[CipherVector, CipherVector]]:
    """Real/imag DFT projections at the requested frequencies.

    Each projection is a plaintext-weighted inner product (mul_plain then
    he_sum); slot 0 of each result holds sum(x * cos) and sum(x * sin).
    Magnitudes and ranking happen client-side after decryption.
    """
    out = []
    t = np.arange(n)
    for f in freqs:
        if f > fs / 2:
            raise ValueError(f"frequency {f} above Nyquist {fs / 2}")
        angle = 2.0 * np.pi * f * t / fs
        cos_ct = he_sum(ev, ev.mul_plain(ct, np.cos(angle)), n)
        sin_ct = he_sum(ev, ev.mul_plain(ct, np.sin(angle)), n)
        out.append((cos_ct, sin_ct))
    return out
