"""
Exception hierarchy for the Fabry-Perot toolkit.

Each error carries the process exit code the CLI reports for it.
"""

from typing import Any, Optional


class FabryPerotError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InvalidParameterError(FabryPerotError, ValueError):
    """A physical or numerical parameter violates its domain invariant."""

    exit_code = 2


class ConfigError(FabryPerotError):
    """The run configuration or command line could not be understood."""

    exit_code = 2


class NumericalError(FabryPerotError):
    """A numerical procedure failed to produce a trustworthy answer."""

    exit_code = 3


class FitConvergenceError(NumericalError):
    """The optimizer did not converge within its iteration limit."""

    def __init__(self, message: str, best: Optional[Any] = None):
        """
        Initialize the error.

        Args:
            message: Human readable failure description
            best: Best-so-far fit result, if any
        """
        super().__init__(message)
        self.best = best


class HistogramError(NumericalError):
    """Photon-number peaks in a pulse-integral histogram are not separable."""


class DataIOError(FabryPerotError):
    """A data file could not be read, parsed, or written."""

    exit_code = 4
