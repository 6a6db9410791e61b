"""Activated random walk and internal DLA on finite chains with a sink."""

__version__ = "0.1.0"
