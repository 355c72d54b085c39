"""Exception hierarchy shared by all modules.

Each error carries an ``exit_code`` used by the command-line front end:
2 for configuration problems, 3 for data problems and 4 for solver failures.
"""

from __future__ import annotations


class BoxclimError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BoxclimError):
    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DataError(BoxclimError):
    exit_code = 3


class SolverError(BoxclimError):
    exit_code = 4


# carbon-core
class TopologyMismatch(ConfigError):
    pass


class InadmissibleSpectrum(SolverError):
    pass


class CapacityExhausted(SolverError):
    pass


class NegativeMassWarning(UserWarning):
    """Issued when a reservoir mass drops below zero; masses are never clipped."""


# calibration
class NoAdmissibleSolution(SolverError):
    pass


# scenarios and ingestion
class ContiguityError(DataError):
    pass


class SchemaError(DataError):
    pass


class TargetNotReached(SolverError):
    pass


class BudgetUnreachable(SolverError):
    pass


# econ
class SolverNotConverged(SolverError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class StepSizeUnstable(SolverError):
    pass


# patterns
class DegenerateRegressor(DataError):
    pass


class EmptyRegion(DataError):
    pass
