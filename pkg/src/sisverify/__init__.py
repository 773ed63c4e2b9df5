"""Verification toolkit for a discrete-time robot safety controller."""

__version__ = "0.1.0"
