"""Penalized volume-constrained free-boundary solver on uniform grids."""
__version__ = "0.1.0"
