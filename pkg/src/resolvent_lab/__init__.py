"""Numerical laboratory for resolvent, parametrix and Carleman estimates."""

__version__ = "0.1.0"
