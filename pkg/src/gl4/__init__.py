"""Numerical workbench for magnetic vortex structures on a minimal surface in R^4.

The package solves the radial building-block profiles, the saddle
field on a quarter-plane, and the geometry of the tubular
neighbourhood of the surface {(z, 1/z)}, and provides residual and
mode diagnostics for the assembled approximate solution.
"""

from . import errors, fermi, jacobi, residual, saddle, vortex

__all__ = ["errors", "fermi", "jacobi", "residual", "saddle", "vortex"]
__version__ = "0.1.0"
