"""Isotonic least squares with conditionally convex piece-wise linear smoothing."""

__version__ = "0.1.0"
