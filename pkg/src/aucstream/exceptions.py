"""Exception types shared across the toolkit.

The CLI maps these onto its exit-code contract: usage/configuration
problems exit 1, data problems exit 2, numeric failures exit 3.
"""


class AucStreamError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AucStreamError):
    """Invalid configuration or arguments (CLI exit code 1)."""


class ParseError(AucStreamError):
    """Malformed input data (CLI exit code 2).

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(AucStreamError):
    """Structurally valid but unusable data, e.g. a single-class test
    set or a dimension mismatch (CLI exit code 2)."""


class NumericError(AucStreamError):
    """Numerical failure: non-finite values, vanishing denominators,
    non-convergent root finding (CLI exit code 3)."""
