"""Exception types shared across the package.

The CLI maps these onto process exit codes (config -> 2, I/O and file
format -> 3, numeric failure -> 4); the HTTP server maps domain/cycle
violations onto 400 responses.
"""


class ConfigError(ValueError):
    """Invalid configuration value or inconsistent parameter combination."""


class DataFormatError(ValueError):
    """A file on disk does not match its declared format or metadata."""


class OutOfDomainError(ValueError):
    """A position or time query falls outside the field's valid range."""


class NumericError(RuntimeError):
    """A computation produced non-finite or degenerate values."""
