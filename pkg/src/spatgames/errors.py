"""Exception types shared across the package."""

from __future__ import annotations


class SpatgamesError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SpatgamesError):
    """A configuration file or dictionary failed validation."""


class SimplexViolation(SpatgamesError):
    """A strategy vector left the probability simplex beyond clamping tolerance."""


class MultiplierNegative(SpatgamesError):
    """A stochastic belief-update multiplier 1 + h*advantage was nonpositive on a supported atom."""


class PositionBoundExceeded(SpatgamesError):
    """An agent position left the configured certification ball."""


class InvariantViolation(SpatgamesError):
    """A trajectory quantity exceeded its certified a-priori bound."""


class NoConvergence(SpatgamesError):
    """An iterative solver exhausted its iteration budget.

    The residual history observed so far is attached as ``residuals``.
    """

    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = list(residuals)


class SolverFailure(SpatgamesError):
    """The underlying linear-programming solver did not return an optimal status."""


class GridMismatch(SpatgamesError):
    """Two trajectories were compared on different time grids."""
