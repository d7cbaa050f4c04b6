"""Zero-crossing modulation with 1-bit quantization: operators, precoding, bound and simulation."""

__version__ = "0.1.0"
