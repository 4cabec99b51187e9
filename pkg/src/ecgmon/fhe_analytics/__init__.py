"""Approximate homomorphic analytics on encrypted signal windows.

The server side evaluates additions, plaintext products, ciphertext
products (with rescale), and slot rotations on opaque ciphertext vectors;
statistics, filtering, squaring, moving-window integration, and DFT
projections are built from those primitives.  Finishing steps that need
comparisons (thresholding, ranking, median/min/max, square roots) run at
the analyst endpoint after decryption — the evaluator never holds a
decryption key.
"""

from ecgmon.fhe_analytics.params import (
    HeParams,
    LevelExhausted,
    RotationUnsupported,
    UnsupportedParams,
)
from ecgmon.fhe_analytics.scheme import (
    CipherVector,
    Decryptor,
    Encryptor,
    Evaluator,
    KeySet,
    deserialize_cipher,
    keygen,
    serialize_cipher,
)
from ecgmon.fhe_analytics.ops import (
    he_dft,
    he_linear_filter,
    he_mean_var,
    he_square,
    he_sum,
)
from ecgmon.fhe_analytics.compare import (
    ComparisonReport,
    MetricTriple,
    compare_pipelines,
    comparison_ratio,
)

__all__ = [
    "HeParams", "LevelExhausted", "RotationUnsupported", "UnsupportedParams",
    "CipherVector", "KeySet", "Encryptor", "Evaluator", "Decryptor",
    "keygen", "serialize_cipher", "deserialize_cipher",
    "he_sum", "he_mean_var", "he_linear_filter", "he_square", "he_dft",
    "ComparisonReport", "MetricTriple", "compare_pipelines", "comparison_ratio",
]
