"""Nodal lengths of Gaussian random spherical harmonics on spherical caps."""

__version__ = "0.1.0"
