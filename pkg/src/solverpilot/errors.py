"""Exception hierarchy shared by all solverpilot modules."""


class SolverPilotError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(SolverPilotError):
    """A decision tree or configuration object violates its structural invariants."""


class CapacityError(SolverPilotError):
    """A candidate enumeration would exceed the configured size cap."""


class SchemaError(SolverPilotError):
    """A context schema is malformed or a required raw input is missing."""


class DomainError(SolverPilotError):
    """A numeric input is outside the mathematical domain of an operation."""


class DataError(SolverPilotError):
    """A dataset is empty or otherwise unusable for the requested operation."""


class ShapeError(SolverPilotError):
    """Array dimensions do not match."""


class FitError(SolverPilotError):
    """Model fitting failed for every hyperparameter candidate."""


class ParseError(SolverPilotError):
    """A persisted file could not be parsed.

    Carries the 1-based line number when the failure is tied to a line.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ComparisonError(SolverPilotError):
    """Experiment summaries are not comparable (different scenarios)."""


class ConfigurationError(SolverPilotError):
    """An experiment or policy configuration is invalid."""
