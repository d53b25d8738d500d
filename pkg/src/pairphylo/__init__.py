"""Reconstruction of tumor subclones and their phylogeny from mutation-pair reads."""

__version__ = "0.1.0"
