"""Exception hierarchy shared by services, handlers and the CLI."""
from typing import Any, Dict, List, Optional

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 64


class CalibrationError(Exception):
    """Base class for every error raised by the engine."""

    exit_code: int = EXIT_DOMAIN


class DomainError(CalibrationError, ValueError):
    """Invalid input, argument or parameter value."""


class AlignmentError(DomainError):
    """Operation needs aligned sources but inputs differ."""


class EmptyResultError(DomainError):
    """Operation produced or received nothing to work with."""


class NumericalError(CalibrationError):
    """Numerical failure in linear algebra, optimization or sampling."""

    exit_code = EXIT_NUMERICAL


class NumericalSingularityError(NumericalError):
    """Matrix could not be factorized even after the jitter ladder."""

    def __init__(self, message: str, spec: Optional[Any] = None):
        super().__init__(message)
        self.spec = spec


class OptimizationError(NumericalError):
    """All optimizer starts failed."""

    def __init__(self, message: str, diagnostics: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class InitializationError(NumericalError):
    """Sampler could not start from a finite log-posterior."""
