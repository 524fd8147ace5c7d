"""Vector quantization with grid codes, bit-allocation plans, and IVF search."""

__version__ = "0.1.0"
