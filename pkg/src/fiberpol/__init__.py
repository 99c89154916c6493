"""Polarization statistics of single-mode fibers with randomly twisted axes."""

__version__ = "0.1.0"
