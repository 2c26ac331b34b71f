"""Supervised-learning tracking filter: boosted trees on rotation-normalized measurement windows."""

__version__ = "0.1.0"
