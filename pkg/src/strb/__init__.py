"""Certified space-time reduced basis methods for parametrized parabolic problems."""

__version__ = "0.1.0"
