"""Numerical lab for the prescribed scalar curvature flow in dimensions 3 to 5."""

__version__ = "0.1.0"
