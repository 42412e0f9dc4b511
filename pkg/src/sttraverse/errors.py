"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
data ingestion problems exit 2, numerical failures exit 3.
"""


class STTraverseError(Exception):
    """Base class for all package errors."""


class ShapeError(STTraverseError, ValueError):
    """Operands have incompatible shapes for the requested operation."""


class StructureError(STTraverseError, ValueError):
    """A sparse index or graph structure violates its invariants."""


class TapeError(STTraverseError, RuntimeError):
    """Illegal use of a differentiation tape (e.g. double backward)."""


class ConfigError(STTraverseError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(STTraverseError, ValueError):
    """Malformed input data (files, series, edge lists)."""


class DivergenceError(STTraverseError, ArithmeticError):
    """Training produced non-finite values."""
