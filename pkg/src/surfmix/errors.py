"""Exception types shared across the package."""


class SurfmixError(Exception):
    """Base class for package errors."""


class DataFormatError(SurfmixError, ValueError):
    """Malformed input data (bad line, wrong arity, unknown ids)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(SurfmixError, ArithmeticError):
    """A factorization or density evaluation failed."""
