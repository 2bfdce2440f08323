"""Finite Kuratowski embeddings of compact surfaces by distance functions to epsilon-nets."""

__version__ = "0.1.0"
