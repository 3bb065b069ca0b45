"""Exception types shared across the package."""


class WavefillError(Exception):
    """Base class for all wavefill errors."""


class ParameterError(WavefillError, ValueError):
    """Invalid argument or configuration value."""


class ParseError(WavefillError):
    """Malformed input file."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyDatasetError(WavefillError):
    """No usable data: empty file, no in-domain rows, or no observed cells."""


class CapacityError(WavefillError):
    """A request exceeds what the data can supply (e.g. eligible cells)."""


class NumericalError(WavefillError):
    """Numerical failure (non-finite iterate, SVD breakdown)."""


class ConfigError(WavefillError):
    """Run-config validation failure, carrying the offending field path."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")
