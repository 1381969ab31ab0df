"""Spectral super-resolution of multispectral imagery by coupled low-rank
dictionary learning and simplex-constrained sparse coding."""

__version__ = "0.1.0"
