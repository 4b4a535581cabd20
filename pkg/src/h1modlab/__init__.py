"""Numerics for the Heisenberg group: Korányi geometry, horizontal curves,
discrete 4-modulus and prime-end boundary experiments."""

__version__ = "0.1.0"
