"""Finite-field rank certification and search for AME quadratic phase states."""

__version__ = "0.1.0"
