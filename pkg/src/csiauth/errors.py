"""Exception types shared across the package."""


class CsiAuthError(Exception):
    """Base class for all package errors."""


class ConfigError(CsiAuthError):
    """Invalid configuration or parameter values (CLI exit code 2)."""


class TraceFormatError(CsiAuthError):
    """Malformed trace / dataset file. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TraceExhaustedError(CsiAuthError):
    """A non-looping spoof trace ran out of records."""


class NumericFault(CsiAuthError):
    """Numerically impossible state, e.g. all-(-inf) forward vector (CLI exit code 3)."""
