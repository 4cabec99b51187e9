"""A self-contained leveled approximate vector scheme.

Ciphertexts are pairs of real polynomials (c0, c1) in R[X]/(X^N + 1) with
N = 2 * slot_count, satisfying c0 + c1*s ~= m + e for a sparse ternary
secret s.  Vectors live in the canonical-embedding slots (evaluations at
half the primitive 2N-th roots of unity, ordered along the orbit of the
Galois generator 5), which makes polynomial products slotwise products
and makes the automorphism X -> X^(5^r) a cyclic slot rotation by r.
Ciphertext products are relinearized with an evaluation key and rescaled;
rotations are key-switched with per-power-of-two rotation keys.  Small
Gaussian noise is injected at encryption and key switching, so results
are approximate and the error budget is meaningful.

There is no coefficient modulus, so unlike a real lattice scheme this
construction makes NO cryptographic hardness claim; it reproduces the
programming model (approximate SIMD arithmetic, levels, rescale, opaque
payloads, key separation) at desk scale.  Decrypting with the wrong key
yields values swamped by the encryption mask.

The "null" backend stores the vector directly with zero noise and the
same level bookkeeping; it exists for differential testing only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from ecgmon.fhe_analytics.params import (
    CipherMismatch,
    HeParams,
    LevelExhausted,
    RotationUnsupported,
    UnsupportedParams,
)

_SECRET_WEIGHT = 64       # nonzero coefficients in the ternary secret
_ENC_WEIGHT = 16          # nonzero coefficients in encryption randomness
_PK_MASK_RATIO = 0.25     # encryption mask amplitude relative to scale
_FRESH_NOISE_RATIO = 1e-9  # fresh noise sigma relative to scale
_SWITCH_NOISE_RATIO = 1e-9  # per-switch output noise sigma relative to scale


@dataclass
class CipherVector:
    """Opaque ciphertext with level/length bookkeeping."""

    backend: str
    level: int
    scale: float
    logical_len: int
    fingerprint: bytes
    c0: np.ndarray | None = None
    c1: np.ndarray | None = None
    values: np.ndarray | None = None  # null backend payload

    def __repr__(self):
        return (f"CipherVector(backend={self.backend}, level={self.level}, "
                f"logical_len={self.logical_len})")


@dataclass(frozen=True)
class EncryptKey:
    backend: str
    fingerprint: bytes
    pk0: np.ndarray | None = None
    pk1: np.ndarray | None = None


@dataclass(frozen=True)
class DecryptKey:
    backend: str
    fingerprint: bytes
    secret: np.ndarray | None = None


@dataclass(frozen=True)
class EvalKeys:
    backend: str
    fingerprint: bytes
    relin: tuple[np.ndarray, np.ndarray] | None = None  # eval-domain pair
    rotations: dict[int, tuple[np.ndarray, np.ndarray]] | None = None


@dataclass(frozen=True)
class KeySet:
    encrypt_key: EncryptKey
    decrypt_key: DecryptKey
    eval_keys: EvalKeys


class _RingContext:
    """Shared negacyclic-ring machinery for one slot count."""

    _cache: dict[int, "_RingContext"] = {}

    def __new__(cls, slot_count: int):
        if slot_count not in cls._cache:
            obj = super().__new__(cls)
            obj._init(slot_count)
            cls._cache[slot_count] = obj
        return cls._cache[slot_count]

    def _init(self, slot_count: int) -> None:
        self.slots = slot_count
        self.N = 2 * slot_count
        k = np.arange(self.N)
        # twist by the primitive 2N-th root turns negacyclic evaluation
        # into a plain length-N DFT
        self.twist = np.exp(1j * np.pi * k / self.N)
        self.twist_conj = np.conj(self.twist)
        # slot t sits at root exponent 5^t mod 2N; conjugate root pairs up
        u = np.empty(self.slots, dtype=np.int64)
        cur = 1
        for t in range(self.slots):
            u[t] = cur
            cur = (cur * 5) % (2 * self.N)
        self.slot_pos = (u - 1) // 2
        self.conj_pos = self.N - 1 - self.slot_pos
        self._auto_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    # polynomial <-> evaluation domain

    def to_evals(self, m: np.ndarray) -> np.ndarray:
        return self.N * np.fft.ifft(m * self.twist)

    def from_evals(self, v: np.ndarray) -> np.ndarray:
        return (np.fft.fft(v) / self.N * self.twist_conj).real

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.from_evals(self.to_evals(a) * self.to_evals(b))

    def multiply_by_evals(self, a: np.ndarray, b_evals: np.ndarray) -> np.ndarray:
        return self.from_evals(self.to_evals(a) * b_evals)

    # encode/decode between slot vectors and coefficient polynomials

    def encode(self, x: np.ndarray, scale: float) -> np.ndarray:
        if len(x) > self.slots:
            raise UnsupportedParams(
                f"vector of {len(x)} exceeds {self.slots} slots"
            )
        v = np.zeros(self.N, dtype=complex)
        z = np.zeros(self.slots, dtype=complex)
        z[: len(x)] = np.asarray(x, dtype=float) * scale
        v[self.slot_pos] = z
        v[self.conj_pos] = np.conj(z)
        return self.from_evals(v)

    def decode(self, m: np.ndarray, scale: float, n: int) -> np.ndarray:
        v = self.to_evals(m)
        return v[self.slot_pos[:n]].real / scale

    # Galois automorphism X -> X^g (coefficient domain)

    def automorphism(self, m: np.ndarray, g: int) -> np.ndarray:
        pos, sign = self._auto(g)
        out = np.empty_like(m)
        out[pos] = m * sign
        return out

    def _auto(self, g: int):
        if g not in self._auto_cache:
            k = np.arange(self.N)
            e = (k * g) % (2 * self.N)
            sign = np.where(e < self.N, 1.0, -1.0)
            pos = np.where(e < self.N, e, e - self.N)
            self._auto_cache[g] = (pos, sign)
        return self._auto_cache[g]

    def rotation_generator(self, r: int) -> int:
        return pow(5, r, 2 * self.N)

    def random_phase_evals(self, rng: np.random.Generator) -> np.ndarray:
        """Unit-modulus, conjugate-symmetric evaluation vector.

        Masks built from these keep ciphertext magnitude exactly constant
        through key switches (the float analog of modular reduction
        keeping components bounded in a real lattice scheme).
        """
        half = self.N // 2
        theta = rng.uniform(0.0, 2.0 * np.pi, half)
        v = np.empty(self.N, dtype=complex)
        v[:half] = np.exp(1j * theta)
        v[self.N - 1 : half - 1 : -1] = np.conj(v[:half])
        return v


def _ternary(rng: np.random.Generator, n: int, weight: int) -> np.ndarray:
    s = np.zeros(n)
    idx = rng.choice(n, size=min(weight, n), replace=False)
    s[idx] = rng.choice([-1.0, 1.0], size=len(idx))
    return s


def keygen(params: HeParams, seed: int = 0) -> KeySet:
    """Encrypt, decrypt, and evaluation keys (relinearization + rotations).

    Rotation keys cover every power of two below slot_count; arbitrary
    amounts are composed from them.  Deterministic for a fixed seed.
    """
    params.validate()
    fp = params.fingerprint()
    if params.backend == "null":
        token = EncryptKey(backend="null", fingerprint=fp)
        return KeySet(token, DecryptKey(backend="null", fingerprint=fp),
                      EvalKeys(backend="null", fingerprint=fp))

    ring = _RingContext(params.slot_count)
    rng = np.random.default_rng(seed)
    noise = params.scale * _FRESH_NOISE_RATIO

    s = _ternary(rng, ring.N, _SECRET_WEIGHT)
    s_evals = ring.to_evals(s)

    def key_switch_pair(target: np.ndarray):
        """(k0, k1) in eval domain with k0 + k1*s = target + tiny noise.

        The k1 mask has unit-modulus evaluations so switching never grows
        ciphertext magnitude.
        """
        a_evals = ring.random_phase_evals(rng)
        e = rng.normal(0.0, params.scale * 1e-12, ring.N)
        k0_evals = ring.to_evals(target + e) - a_evals * s_evals
        return k0_evals, a_evals

    # encryption mask sized so wrong-key decryption is swamped by garbage
    # while products stay well inside float64 precision at depth 2
    pk1 = ring.from_evals(params.scale * _PK_MASK_RATIO
                          * ring.random_phase_evals(rng))
    e_pk = rng.normal(0.0, noise, ring.N)
    pk0 = -ring.multiply(pk1, s) + e_pk

    relin = key_switch_pair(ring.multiply(s, s))
    rotations = {}
    r = 1
    while r < params.slot_count:
        g = ring.rotation_generator(r)
        rotations[r] = key_switch_pair(ring.automorphism(s, g))
        r *= 2

    return KeySet(
        EncryptKey(backend="toy", fingerprint=fp, pk0=pk0, pk1=pk1),
        DecryptKey(backend="toy", fingerprint=fp, secret=s),
        EvalKeys(backend="toy", fingerprint=fp, relin=relin,
                 rotations=rotations),
    )


class Encryptor:
    """Holds the public encryption key only."""

    def __init__(self, params: HeParams, key: EncryptKey, seed: int = 1):
        params.validate()
        if key.fingerprint != params.fingerprint():
            raise CipherMismatch("encrypt key does not match params")
        self.params = params
        self._key = key
        self._rng = np.random.default_rng(seed)
        self._ring = _RingContext(params.slot_count) if key.backend == "toy" else None

    def encrypt(self, x) -> CipherVector:
        x = np.asarray(x, dtype=float)
        fp = self.params.fingerprint()
        if self._key.backend == "null":
            values = np.zeros(self.params.slot_count)
            values[: len(x)] = x
            return CipherVector("null", self.params.multiplicative_depth, 1.0,
                                len(x), fp, values=values)
        ring = self._ring
        scale = self.params.scale
        m = ring.encode(x, scale)
        v = _ternary(self._rng, ring.N, _ENC_WEIGHT)
        noise = scale * _FRESH_NOISE_RATIO
        c0 = ring.multiply(self._key.pk0, v) + m + self._rng.normal(0, noise, ring.N)
        c1 = ring.multiply(self._key.pk1, v) + self._rng.normal(0, noise, ring.N)
        return CipherVector("toy", self.params.multiplicative_depth, scale,
                            len(x), fp, c0=c0, c1=c1)


class Decryptor:
    """Holds the secret key; lives at the analyst endpoint."""

    def __init__(self, params: HeParams, key: DecryptKey):
        params.validate()
        if key.fingerprint != params.fingerprint():
            raise CipherMismatch("decrypt key does not match params")
        self.params = params
        self._key = key
        self._ring = _RingContext(params.slot_count) if key.backend == "toy" else None

    def decrypt(self, ct: CipherVector, n: int | None = None) -> np.ndarray:
        n = ct.logical_len if n is None else n
        if self._key.backend == "null":
            return ct.values[:n].copy()
        ring = self._ring
        m = ct.c0 + ring.multiply(ct.c1, self._key.secret)
        return ring.decode(m, ct.scale, n)


class Evaluator:
    """Homomorphic operations; holds evaluation keys only (no decryption)."""

    def __init__(self, params: HeParams, keys: EvalKeys):
        params.validate()
        if keys.fingerprint != params.fingerprint():
            raise CipherMismatch("evaluation keys do not match params")
        self.params = params
        self._keys = keys
        self._ring = _RingContext(params.slot_count) if keys.backend == "toy" else None
        self._rng = np.random.default_rng(2)

    # -- helpers --------------------------------------------------------------

    def _check(self, ct: CipherVector) -> None:
        if ct.fingerprint != self.params.fingerprint():
            raise CipherMismatch("ciphertext from a different parameter set")

    def _check_pair(self, a: CipherVector, b: CipherVector) -> None:
        self._check(a)
        self._check(b)

    def _switch_noise(self) -> np.ndarray:
        sigma = self.params.scale * _SWITCH_NOISE_RATIO
        return self._rng.normal(0.0, sigma, self._ring.N)

    # -- linear operations ------------------------------------------------------

    def add(self, a: CipherVector, b: CipherVector) -> CipherVector:
        self._check_pair(a, b)
        level = min(a.level, b.level)
        n = max(a.logical_len, b.logical_len)
        if a.backend == "null":
            return replace(a, level=level, logical_len=n,
                           values=a.values + b.values)
        return replace(a, level=level, logical_len=n,
                       c0=a.c0 + b.c0, c1=a.c1 + b.c1)

    def sub(self, a: CipherVector, b: CipherVector) -> CipherVector:
        return self.add(a, self.negate(b))

    def negate(self, a: CipherVector) -> CipherVector:
        self._check(a)
        if a.backend == "null":
            return replace(a, values=-a.values)
        return replace(a, c0=-a.c0, c1=-a.c1)

    def add_plain(self, a: CipherVector, x) -> CipherVector:
        self._check(a)
        x = np.asarray(x, dtype=float)
        if a.backend == "null":
            values = a.values.copy()
            values[: len(x)] += x
            return replace(a, values=values,
                           logical_len=max(a.logical_len, len(x)))
        m = self._ring.encode(x, a.scale)
        return replace(a, c0=a.c0 + m,
                       logical_len=max(a.logical_len, len(x)))

    def mul_plain(self, a: CipherVector, x) -> CipherVector:
        """Slotwise product with a plaintext vector or scalar (no depth cost)."""
        self._check(a)
        if np.isscalar(x):
            if a.backend == "null":
                return replace(a, values=a.values * float(x))
            return replace(a, c0=a.c0 * float(x), c1=a.c1 * float(x))
        x = np.asarray(x, dtype=float)
        if a.backend == "null":
            pad = np.zeros_like(a.values)
            pad[: len(x)] = x
            return replace(a, values=a.values * pad)
        p = self._ring.encode(x, 1.0)
        p_evals = self._ring.to_evals(p)
        return replace(a,
                       c0=self._ring.multiply_by_evals(a.c0, p_evals),
                       c1=self._ring.multiply_by_evals(a.c1, p_evals))

    # -- multiplicative operations ----------------------------------------------

    def mul(self, a: CipherVector, b: CipherVector) -> CipherVector:
        """Slotwise ciphertext product with relinearization and rescale."""
        self._check_pair(a, b)
        level = min(a.level, b.level)
        if level < 1:
            raise LevelExhausted(
                f"multiplicative depth exhausted (level {level})"
            )
        n = max(a.logical_len, b.logical_len)
        if a.backend == "null":
            return replace(a, level=level - 1, logical_len=n,
                           values=a.values * b.values)
        ring = self._ring
        scale = self.params.scale
        p0 = ring.multiply(a.c0, b.c0)
        p1 = ring.multiply(a.c0, b.c1) + ring.multiply(a.c1, b.c0)
        p2 = ring.multiply(a.c1, b.c1)
        k0, k1 = self._keys.relin
        c0 = p0 + ring.multiply_by_evals(p2, k0) + self._switch_noise() * scale
        c1 = p1 + ring.multiply_by_evals(p2, k1)
        # rescale: product carries scale^2, divide once to return to scale
        return replace(a, level=level - 1, logical_len=n,
                       c0=c0 / scale, c1=c1 / scale)

    def square(self, a: CipherVector) -> CipherVector:
        return self.mul(a, a)

    # -- rotations ---------------------------------------------------------------

    def rotate(self, a: CipherVector, r: int) -> CipherVector:
        """Cyclic left slot rotation: slot i of the result holds slot i+r."""
        self._check(a)
        slots = self.params.slot_count
        r = r % slots
        if r == 0:
            return replace(a)
        if a.backend == "null":
            return replace(a, values=np.roll(a.values, -r),
                           logical_len=slots)
        out = a
        bit = 1
        while r:
            if r & 1:
                out = self._rotate_power(out, bit)
            r >>= 1
            bit <<= 1
        return out

    def _rotate_power(self, a: CipherVector, r: int) -> CipherVector:
        keys = self._keys.rotations
        if keys is None or r not in keys:
            raise RotationUnsupported(f"no rotation key for amount {r}")
        ring = self._ring
        g = ring.rotation_generator(r)
        c0r = ring.automorphism(a.c0, g)
        c1r = ring.automorphism(a.c1, g)
        k0, k1 = keys[r]
        c0 = c0r + ring.multiply_by_evals(c1r, k0) + self._switch_noise()
        c1 = ring.multiply_by_evals(c1r, k1)
        return replace(a, c0=c0, c1=c1, logical_len=self.params.slot_count)


# -- serialization --------------------------------------------------------------

_ENVELOPE = struct.Struct("<32sBII")


def serialize_cipher(ct: CipherVector) -> bytes:
    """fingerprint (32 B) | level u8 | logical_len u32 | payload u32 + bytes."""
    if ct.backend == "null":
        payload = b"N" + struct.pack("<d", ct.scale) + ct.values.astype("<f8").tobytes()
    else:
        payload = (b"T" + struct.pack("<d", ct.scale)
                   + ct.c0.astype("<f8").tobytes()
                   + ct.c1.astype("<f8").tobytes())
    return _ENVELOPE.pack(ct.fingerprint, ct.level, ct.logical_len,
                          len(payload)) + payload


def deserialize_cipher(params: HeParams, data: bytes) -> CipherVector:
    fp, level, logical_len, payload_len = _ENVELOPE.unpack_from(data, 0)
    if fp != params.fingerprint():
        raise CipherMismatch("ciphertext fingerprint does not match params")
    payload = data[_ENVELOPE.size : _ENVELOPE.size + payload_len]
    if len(payload) != payload_len:
        raise ValueError("truncated ciphertext payload")
    tag, payload = payload[:1], payload[1:]
    (scale,) = struct.unpack_from("<d", payload, 0)
    body = np.frombuffer(payload[8:], dtype="<f8")
    if tag == b"N":
        return CipherVector("null", level, scale, logical_len, fp,
                            values=body.copy())
    n = 2 * params.slot_count
    if len(body) != 2 * n:
        raise ValueError("ciphertext payload length mismatch")
    return CipherVector("toy", level, scale, logical_len, fp,
                        c0=body[:n].copy(), c1=body[n:].copy())
