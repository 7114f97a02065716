"""Exceptions raised by surgical-lc."""

from typing import List, Optional, Tuple


class SurgicalLcError(Exception):
    """Base class for every error raised on purpose by this package."""


class DomainError(SurgicalLcError, ValueError):
    """An argument lies outside the domain of the operation."""


class InsufficientDataError(DomainError):
    """Too few cases to identify the model parameters."""

    def __init__(self, n_cases: int, n_min: int):
        self.n_cases = n_cases
        self.n_min = n_min
        super().__init__(f"{n_cases} cases supplied, at least {n_min} required")


class CaseParseError(DomainError):
    """A case file could not be parsed.

    Rows are numbered from 1 for the first data row after the header.
    """

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(f"{prefix}{message}")


class NumericalError(SurgicalLcError, ArithmeticError):
    """A numerical procedure failed (singular system, non-finite value, ...)."""

    def __init__(self, message: str, condition: Optional[float] = None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)


class CalibrationError(NumericalError):
    """Cutoff search could not reach the target false-alarm range."""

    def __init__(self, message: str, bracket: List[Tuple[float, float]]):
        self.bracket = bracket
        evidence = ", ".join(f"h={h:.4g}: pfa={p:.4f}" for h, p in bracket)
        super().__init__(f"{message}; evaluated {evidence}")


class NoQualifyingReplicationsError(NumericalError):
    """Every replication signalled before the change point."""

    def __init__(self, excluded: int):
        self.excluded = excluded
        super().__init__(
            f"no replication qualifies for detection: all {excluded} signalled before the change"
        )
