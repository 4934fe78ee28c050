"""Synthetic first-order Ambisonics scenes with ground-truth metadata and permutation-invariant scoring."""

__version__ = "0.1.0"
