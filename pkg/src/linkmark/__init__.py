"""Invisible hyperlinks in natural images, robust to simulated camera capture."""

__version__ = "0.1.0"
