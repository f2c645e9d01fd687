"""Ptychographic phase retrieval engines and a synthetic experiment harness."""

__version__ = "0.1.0"
