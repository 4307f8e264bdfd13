"""Numerical toolkit relating the polaron effective mass to the path-measure diffusion constant."""

__version__ = "0.1.0"
