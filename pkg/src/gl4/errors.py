"""Error hierarchy shared by all gl4 modules.

Everything raised on purpose derives from :class:`GL4Error`, so callers (and
the CLI) can map failures onto the two non-zero exit codes: invalid input vs.
solver non-convergence.
"""

from __future__ import annotations


class GL4Error(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GL4Error, ValueError):
    """A precondition on user-supplied data was violated."""


class SingularParameterError(InvalidInputError):
    """A surface parameter sits on the coordinate singularity (s = 0 or pi/2)."""


class ConvergenceError(GL4Error, RuntimeError):
    """An iterative solver exhausted its iteration cap.

    Carries the residual history so a caller can inspect how the solve died.
    """

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])

    @property
    def last_residual(self):
        return self.residual_history[-1] if self.residual_history else None


class DegenerateFitError(GL4Error, ArithmeticError):
    """A least-squares fit window contains non-positive data (log undefined)."""


class DegeneratePointError(InvalidInputError):
    """Closest-point query at the origin: every point of the s = pi/4 circle
    is equidistant.  Carries the documented limit data instead of a result."""

    def __init__(self, message: str, distance: float, s: float, phi_limit: float):
        super().__init__(message)
        self.distance = distance
        self.s = s
        self.phi_limit = phi_limit


class OutsideTubularNeighborhoodError(InvalidInputError):
    """The queried point has no unique valid Fermi coordinate chart."""


class UnsupportedRegionError(InvalidInputError):
    """A chart node lies in a cutoff band where the requested identity does
    not apply."""


class InvalidChartError(InvalidInputError):
    """A chart grid leaves the tubular validity region."""
