"""NLReLU activation, a small NumPy network engine, and experiment harness."""

__version__ = "0.1.0"
