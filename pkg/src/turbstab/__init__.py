"""Recover a geometrically stable image from turbulence-distorted frames."""

__version__ = "0.1.0"
