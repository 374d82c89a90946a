"""Sofic entropy, the f-invariant and related finite experiments for free groups."""

__version__ = "0.1.0"
