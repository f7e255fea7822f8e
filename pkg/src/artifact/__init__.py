"""Numerical laboratory for boundary-layer energy expansions of Allen-Cahn type functionals."""

__version__ = "0.1.0"
