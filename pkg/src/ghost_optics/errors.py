"""Exception hierarchy shared by the simulation, estimation and CLI layers."""

from typing import Any, Dict, Optional


class GhostOpticsError(Exception):
    """Base class for every error raised by ghost_optics."""


class InvalidArgumentError(GhostOpticsError, ValueError):
    """An operation received an argument outside its domain."""


class ResolutionError(GhostOpticsError):
    """The transverse grid cannot resolve the structures a simulation needs."""

    def __init__(self, message: str, required: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.required = required or {}


class ConfigurationError(GhostOpticsError):
    """A physically inconsistent optical configuration (e.g. imaging condition not met)."""

    def __init__(self, message: str, check: str = ""):
        super().__init__(message)
        self.check = check


class ConfigParseError(GhostOpticsError):
    """Experiment file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class ConfigValidationError(GhostOpticsError):
    """Experiment file parsed but violates a model invariant."""


class FitError(GhostOpticsError):
    """A least-squares fit did not converge."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientDataError(FitError):
    """The data cannot constrain the requested fit (e.g. too few fringes)."""


class ShapeError(GhostOpticsError):
    """A pattern does not have the peak structure an estimator requires."""
