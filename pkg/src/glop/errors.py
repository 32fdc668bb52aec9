"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 2, SolverError -> 3,
anything argument-shaped -> 1.
"""


class GlopError(Exception):
    """Base class for all package-specific errors."""


class DataError(GlopError):
    """Problem with input data (files, schemas, values)."""


class SchemaError(DataError):
    """A required column is missing or the header is malformed."""


class ParseError(DataError):
    """A cell failed to parse as a finite real number."""


class EmptyInputError(DataError):
    """The input contained no data rows."""


class SolverError(GlopError):
    """An optimization routine failed."""


class NumericalError(SolverError):
    """Non-finite values appeared during optimization."""


class TieError(SolverError):
    """An exact correlation tie that the path algorithm refuses to break."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class SelectionError(SolverError):
    """Every grid cell failed during model selection."""


class CapacityError(GlopError):
    """Problem size exceeds an enumeration bound."""


class PathRangeError(GlopError):
    """A path was evaluated outside its computed range."""
