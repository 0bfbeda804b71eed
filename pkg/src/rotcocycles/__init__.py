"""Exact tools for step cocycles over irrational rotations."""

__version__ = "0.1.0"
