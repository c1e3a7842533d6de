"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data and
schema problems exit 3, numerical failures exit 4.
"""

from __future__ import annotations


class HdgapError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HdgapError):
    """Invalid configuration: bad baselines, malformed config file, bad knobs."""


class DataError(HdgapError):
    """The data cannot support the requested operation."""


class SchemaError(DataError):
    """Input file does not match the declared column schema."""


class ParseError(DataError):
    """One or more cells failed to parse.

    ``cells`` holds ``(row, column, message)`` tuples with 1-based row numbers
    counted from the first data row.
    """

    def __init__(self, message: str, cells: list[tuple[int, str, str]]):
        super().__init__(message)
        self.cells = cells


class NumericalError(HdgapError):
    """A numerical routine failed (singular matrix, divergence, ...)."""


class ConvergenceError(NumericalError):
    """Solver hit its iteration cap.

    Carries the last iterate and the worst stationarity violation so callers
    can inspect how far off the run ended.
    """

    def __init__(self, message: str, coefficients=None, kkt_violation=None):
        super().__init__(message)
        self.coefficients = coefficients
        self.kkt_violation = kkt_violation
