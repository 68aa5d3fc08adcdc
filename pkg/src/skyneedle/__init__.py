"""Needlet-based isotropy testing for directional data on the sphere."""

__version__ = "0.1.0"
