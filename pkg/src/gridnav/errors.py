"""Package exception hierarchy.

Episode runners catch GridNavError to convert module failures into an
``error`` termination with diagnostics instead of crashing a benchmark.
"""

from __future__ import annotations

__all__ = [
    "GridNavError",
    "WorldFormatError",
    "InvariantViolation",
    "CalibrationError",
    "SampleExhausted",
    "EmptyProjectionError",
    "NoSeedError",
    "UnreachableLocalError",
    "PlacementError",
    "ConfigError",
]


class GridNavError(Exception):
    """Base class for all package-specific failures."""


class WorldFormatError(GridNavError):
    """Malformed world or episode file; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvariantViolation(GridNavError):
    """A structural invariant of a domain object does not hold."""


class CalibrationError(GridNavError):
    """Matcher calibration anchors are inconsistent or infeasible."""


class SampleExhausted(GridNavError):
    """Rejection sampling gave up; names the anchor and band concerned."""


class EmptyProjectionError(GridNavError):
    """A goal projection was requested from a view with no goal pixels."""


class NoSeedError(GridNavError):
    """A distance field was requested with an empty goal mask."""


class UnreachableLocalError(GridNavError):
    """No feasible waypoint exists within the local planning radius."""


class PlacementError(GridNavError):
    """World generation could not satisfy placement constraints."""


class ConfigError(GridNavError):
    """Bad run-configuration file or value."""
