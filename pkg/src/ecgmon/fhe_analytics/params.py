"""Scheme parameters and error types for the encrypted-analytics layer."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass


class UnsupportedParams(ValueError):
    pass


class LevelExhausted(RuntimeError):
    """A ciphertext product was requested with no multiplicative depth left."""


class RotationUnsupported(RuntimeError):
    """Requested slot rotation has no usable rotation keys."""


class CipherMismatch(ValueError):
    """Operands come from different parameter sets or backends."""


@dataclass(frozen=True)
class HeParams:
    """Approximate-arithmetic parameters.

    slot_count         power of two, must cover the window length
    scale              fixed-point precision anchor for encoded slots
    multiplicative_depth  supported ct*ct levels (squaring needs one)
    error_budget       target max relative error after decryption
    backend            "toy" (leveled approximate scheme) or "null"
                       (identity encryption, zero noise, differential
                       testing only)
    """

    slot_count: int = 4096
    scale: float = 1024.0
    multiplicative_depth: int = 2
    error_budget: float = 1e-3
    backend: str = "toy"

    def validate(self) -> None:
        if self.slot_count < 2 or self.slot_count & (self.slot_count - 1):
            raise UnsupportedParams(f"slot_count {self.slot_count} not a power of two")
        if self.multiplicative_depth < 1:
            raise UnsupportedParams("multiplicative_depth must be >= 1")
        if self.scale <= 0:
            raise UnsupportedParams("scale must be positive")
        if self.backend not in ("toy", "null"):
            raise UnsupportedParams(f"unknown backend {self.backend!r}")

    def fingerprint(self) -> bytes:
        text = (f"{self.backend}|{self.slot_count}|{self.scale!r}|"
                f"{self.multiplicative_depth}|{self.error_budget!r}")
        return hashlib.sha256(text.encode()).digest()
