"""Patch-wise implicit neural video codec."""
__version__ = "0.1.0"
