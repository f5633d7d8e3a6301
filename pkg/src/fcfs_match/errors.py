"""Exception types shared across the package."""

from __future__ import annotations


class FcfsMatchError(Exception):
    """Base class for all package errors."""


class ValidationIssue(FcfsMatchError):
    """A single violated model invariant. Collected by ModelValidationError."""


class FrequencySumError(ValidationIssue):
    pass


class NonPositiveFrequency(ValidationIssue):
    pass


class NonPositiveRate(ValidationIssue):
    pass


class UnknownIdentifier(ValidationIssue):
    pass


class IsolatedAgentType(ValidationIssue):
    pass


class DuplicateIdentifier(ValidationIssue):
    pass


class ModelValidationError(FcfsMatchError):
    """Aggregate of every invariant violated by a model."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


class DuplicateType(FcfsMatchError):
    """A type identifier appears more than once where distinctness is required."""


class UnstableModel(FcfsMatchError):
    """The stability condition fails (or is numerically indistinguishable from failing)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class TooManyTypes(FcfsMatchError):
    """Agent-type count exceeds the enumeration cap and no override was given."""


class ZeroRate(FcfsMatchError):
    """A per-pair quantity is undefined because the pair's matching rate is zero."""


class DomainError(FcfsMatchError, ValueError):
    """Argument outside the mathematical domain of the requested transform."""


class UnstableGridPoint(FcfsMatchError):
    """A sweep grid point lies at or beyond the maximal stable traffic intensity."""

    def __init__(self, rho, limit):
        super().__init__(f"grid point rho={rho:g} is not stable (max stable rho={limit:g})")
        self.rho = rho
        self.limit = limit


class OpenWindow(FcfsMatchError):
    """A position outside the certified region of an exchanged window was requested."""
