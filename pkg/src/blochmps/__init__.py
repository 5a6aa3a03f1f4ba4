"""Momentum-resolved excitation spectra of periodic spin chains from a
single-impurity translation-invariant MPS ansatz."""

__version__ = "0.1.0"
