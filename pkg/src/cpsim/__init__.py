"""Deterministic warehouse simulation: shared vs standalone robot perception."""

__version__ = "0.1.0"
