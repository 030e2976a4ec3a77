"""Exception hierarchy shared by every module."""


class ReserveError(Exception):
    """Base class for all package errors."""


class ValidationError(ReserveError, ValueError):
    """Input violates a documented invariant."""


class ParseError(ValidationError):
    """Malformed dataset input. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StructuralError(ReserveError):
    """An LP solution does not index the model it is checked against."""


class SizeLimitError(ReserveError):
    """A computation would exceed a configured size cap."""


class SolverError(ReserveError):
    """The LP solver returned a non-optimal status where optimality is required."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)
