"""Numerical laboratory for the volume-preserving curvature flow on warped products."""

__version__ = "0.1.0"
