"""Exception types shared across shadowlab."""

from __future__ import annotations


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class InsufficientResolution(ContractViolation):
    """A pattern domain does not cover the exhaustion level being queried."""

    def __init__(self, message: str, missing=None):
        super().__init__(message)
        self.missing = list(missing) if missing is not None else []


class InsufficientTruncation(ContractViolation):
    """A pattern is too small for the cellular automata applied to it."""

    def __init__(self, message: str, missing=None):
        super().__init__(message)
        self.missing = list(missing) if missing is not None else []


class UnsupportedMode(ContractViolation):
    """A computation mode is not available for the given input."""


class ExponentOverflow(ContractViolation):
    """A monomial exponent exceeds the configured budget."""


class NonCommutingGenerators(ContractViolation):
    """A generator family was required to commute but does not."""
