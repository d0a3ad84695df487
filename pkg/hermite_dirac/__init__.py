"""Finite-basis Hermite-spline solver for the two-center Dirac equation."""
__version__ = "0.1.0"
