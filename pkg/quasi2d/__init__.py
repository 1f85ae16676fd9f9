"""Numerical toolkit for quasi-two-dimensional Bose gases."""

__version__ = "0.1.0"
