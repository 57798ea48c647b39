"""Numerical laboratory for boundary layers over rough walls."""

__version__ = "0.1.0"
