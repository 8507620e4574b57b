"""Numerical toolkit for conformal eigenvalue optimization on triangle meshes."""

__version__ = "0.1.0"
