"""Numerical laboratory for long-range O(n) models below the upper critical dimension."""

__version__ = "0.1.0"
