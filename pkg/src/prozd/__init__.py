"""Proactive zero-day risk assessment over zero-trust micro-segmented networks."""

__version__ = "0.1.0"
