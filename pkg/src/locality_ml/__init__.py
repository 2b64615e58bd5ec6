"""Data-locality-aware ML kernels: SGD variants with a sliding window,
brute-force instance learners, jointly trained linear models and
reuse-distance tracing."""

__version__ = "0.1.0"
