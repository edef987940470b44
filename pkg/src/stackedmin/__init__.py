"""Numerical node-opening construction of stacked minimal surfaces in T x R."""

__version__ = "0.1.0"
