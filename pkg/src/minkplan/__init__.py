"""Polynomial outer approximations of polytope-ball Minkowski sums, and a
motion planner that uses them as collision constraints."""

__version__ = "0.1.0"
