"""Steady states and Lagrangian evolution of a self-gravitating radiating gas ball."""

__version__ = "0.1.0"
