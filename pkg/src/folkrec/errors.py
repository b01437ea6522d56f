"""Exception types shared across the package.

The CLI maps these onto exit codes: config/usage problems -> 1,
data problems -> 2, numerical failures -> 3.
"""


class FolkrecError(Exception):
    """Base class for all folkrec errors."""


class ParseError(FolkrecError):
    """Malformed input file. Carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ConfigError(FolkrecError):
    """Invalid or missing configuration."""


class DataError(FolkrecError):
    """Inconsistent or unusable data (empty folksonomy, id mismatches, ...)."""


class NumericalError(FolkrecError):
    """Training produced a non-finite loss."""
