"""Robust procurement: constant-share tariffs and their surplus guarantees."""

__version__ = "0.1.0"
