"""Desk-scale Housekeep: episode generation, a modular rearrangement agent, and metrics."""

__version__ = "0.1.0"
