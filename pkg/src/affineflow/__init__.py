"""Fully affine invariants of curves, their variational theory and heat flows."""

__version__ = "0.1.0"
