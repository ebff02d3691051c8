"""Schrodinger dynamics as the slow sector of a quadratic Hamiltonian field system."""

__version__ = "0.1.0"
