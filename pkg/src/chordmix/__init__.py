"""Mixing of a drifting random walk on a cycle with one chord."""

__version__ = "0.1.0"
