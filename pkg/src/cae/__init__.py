"""Contractive auto-encoders, the comparison models, and contraction analysis."""

__version__ = "0.1.0"
