"""Discretised Brownian snakes and the geometry they code."""

__version__ = "0.1.0"
