"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code: validation problems exit 1,
runtime/numeric failures exit 2, capacity refusals exit 3.
"""

from __future__ import annotations


class SigallocError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ValidationError(SigallocError):
    """Bad input: scenario keys, mismatched totals, out-of-range parameters."""

    exit_code = 1


class EvaluationError(SigallocError):
    """A cost expression produced a non-finite value, or a path aborted."""

    exit_code = 2


class CapacityError(SigallocError):
    """The population space exceeds the configured size cap."""

    exit_code = 3


class ReducibleChainError(SigallocError):
    """The transition matrix has more than one closed communicating class."""

    exit_code = 2

    def __init__(self, message: str, closed_classes: list[list[int]]):
        super().__init__(message)
        self.closed_classes = closed_classes


class CertificateError(ValidationError):
    """Certificate arithmetic is unavailable for the given smoothing parameters."""
