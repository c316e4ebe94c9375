"""Numerical toolkit for shear-flow instability under Navier slip."""

__version__ = "0.1.0"
