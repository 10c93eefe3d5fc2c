"""Finite-section verification of domain criteria for infinite matrices and first-order operators."""

__version__ = '0.1.0'
