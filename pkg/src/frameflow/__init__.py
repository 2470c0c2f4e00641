"""Numerical laboratory for frame flows on convex cocompact rank-one quotients."""

__version__ = "0.1.0"
