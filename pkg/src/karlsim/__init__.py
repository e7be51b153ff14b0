"""Deterministic digital twin of the karl. research vehicle platform."""

__version__ = "0.1.0"
