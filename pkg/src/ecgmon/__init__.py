"""Privacy-preserving ECG monitoring pipeline.

Patient agents stream marker-byte ECG frames over an authenticated
encrypted channel to a gateway that stores ciphertext, classifies beats,
and runs both plaintext and homomorphic analyses.
"""

__version__ = "0.1.0"
