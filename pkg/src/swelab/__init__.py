"""Numerical laboratory for the wave equation driven by Riesz-kernel noise."""

__version__ = "0.1.0"

