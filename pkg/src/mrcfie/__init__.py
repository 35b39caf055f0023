"""Multiresolution-preconditioned MoM solver for PEC scattering."""

__version__ = "0.1.0"
