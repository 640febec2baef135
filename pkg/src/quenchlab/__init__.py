"""Numerical laboratory for random intermittent interval maps with a singular point."""

__version__ = "0.1.0"
