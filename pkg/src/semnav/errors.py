"""Exception types shared across the package."""

from __future__ import annotations


class SemnavError(Exception):
    """Base class for all package errors."""


class BoundsError(SemnavError, IndexError):
    pass


class DimensionError(SemnavError, ValueError):
    pass


class ProviderContractError(SemnavError, ValueError):
    """An embedding provider returned something that violates its contract."""


class VocabularyError(SemnavError, KeyError):
    pass


class TransportError(SemnavError):
    def __init__(self, message: str, attempts: int = 0):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class NoPathError(SemnavError):
    pass


class LoadError(SemnavError):
    pass


class InvariantViolation(SemnavError):
    pass
