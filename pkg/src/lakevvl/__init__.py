"""Degenerate viscous lake equations on the unit disk: simulator and verification harness."""

__version__ = "0.1.0"
