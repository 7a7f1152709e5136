"""Maximal flows through lattice cylinders in first passage percolation."""

__version__ = "0.1.0"
