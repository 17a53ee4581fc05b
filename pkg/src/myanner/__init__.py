"""Syllable-level named entity recognition for Myanmar text."""

__version__ = "0.1.0"
