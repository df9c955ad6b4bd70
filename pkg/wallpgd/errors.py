"""Typed errors raised across wallpgd. The CLI maps them to exit codes."""


class WallPgdError(Exception):
    """Base class for every error raised on purpose by the package."""


class InvalidArgumentError(WallPgdError, ValueError):
    pass


class ShapeError(WallPgdError, ValueError):
    pass


class SingularSystemError(WallPgdError, ArithmeticError):
    pass


class NumericalFailureError(WallPgdError, ArithmeticError):
    pass


class ModelFormatError(WallPgdError, OSError):
    """Unreadable, corrupt or version-mismatched basis/model file."""


class ConfigError(WallPgdError):
    pass


class MeasurementParseError(WallPgdError):
    """Malformed measurement CSV. `line` is the 1-based line in the file (None if unknown)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
