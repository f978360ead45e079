"""Exception hierarchy shared across the package.

Each error class carries the process exit code the CLI maps it to.
"""

from __future__ import annotations


class GraphsegError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(GraphsegError):
    """Invalid parameter, malformed config, or inconsistent options."""

    exit_code = 1


class DataError(GraphsegError):
    """Bad or degenerate input data (files, point sets, labels)."""

    exit_code = 2


class DegenerateScaleError(DataError):
    """Duplicate points give a zero local scale for zmp weights."""


class DegenerateDistanceError(DataError):
    """An edge connects two coincident points (zero distance)."""


class SolverDivergenceError(GraphsegError):
    """Non-finite values appeared during solver iterations."""

    exit_code = 3

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class SpectralConvergenceError(GraphsegError):
    """Eigenvector iteration did not meet its residual tolerance."""

    exit_code = 3

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class InfeasibleSizeError(GraphsegError):
    """Size constraints cannot be satisfied by any labeling."""

    exit_code = 4


class InfeasibleSupervisionError(DataError):
    """Supervision sampling cannot satisfy the requested fraction."""
