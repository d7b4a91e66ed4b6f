"""Numerical laboratory for half-geodesics on closed surfaces in 3-space."""

__version__ = "0.1.0"
