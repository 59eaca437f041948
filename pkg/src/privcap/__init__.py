"""Numerical laboratory for the private-but-incoherent channel family N_d."""

__version__ = "0.1.0"
