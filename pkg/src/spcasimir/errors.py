"""Exception types shared across the package."""

from __future__ import annotations


class CasimirError(Exception):
    """Base class for all errors raised by spcasimir."""


class DomainError(CasimirError, ValueError):
    """An input lies outside the domain of a physical function."""


class ConvergenceError(CasimirError, RuntimeError):
    """A quadrature or truncation probe failed to meet its tolerance."""


class SingularityError(CasimirError, ArithmeticError):
    """``1 - M`` is singular or has non-positive determinant."""


class FitError(CasimirError, ValueError):
    """Least-squares fit is rank deficient or underdetermined."""


class ConfigError(CasimirError, ValueError):
    """A run configuration is invalid (unknown or missing key, bad value)."""
