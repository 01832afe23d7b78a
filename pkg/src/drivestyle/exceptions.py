"""Exception hierarchy. Each class maps to a CLI exit code."""


class DriveStyleError(Exception):
    exit_code = 1


class ConfigError(DriveStyleError, ValueError):
    """Bad or missing configuration (exit code 2)."""

    exit_code = 2


class DataError(DriveStyleError, ValueError):
    """Input data violates a contract (exit code 3)."""

    exit_code = 3


class RecordError(DataError):
    """A single malformed input record."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(DriveStyleError, ArithmeticError):
    """A numerical procedure produced no usable result (exit code 4)."""

    exit_code = 4


class StyleTieError(ConfigError):
    """Style labels cannot be decided automatically; supply an override."""
