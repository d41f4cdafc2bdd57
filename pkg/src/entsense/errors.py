"""Shared exception and warning types.

The split mirrors how callers are expected to react: configuration errors
mean the run request itself is malformed and nothing was computed;
domain errors mean a mathematically valid object was asked to evaluate
outside its domain; empty-statistics errors mean a denominator count was
zero; fit errors carry the state of a non-converged optimization.
"""

from __future__ import annotations


class EntsenseError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(EntsenseError, ValueError):
    """A parameter set or config document violates a construction contract."""


class DomainError(EntsenseError, ValueError):
    """An operation was evaluated outside its mathematical domain."""


class EmptyStatisticsError(EntsenseError, ZeroDivisionError):
    """An estimator denominator (count) was zero."""


class FitError(EntsenseError, RuntimeError):
    """A nonlinear fit failed to converge.

    Attributes
    ----------
    residuals : ndarray or None
        Weighted residual vector at the final iterate, when available.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class DegenerateEstimateWarning(UserWarning):
    """An estimate sits on a boundary or a flat likelihood plateau.

    The warning message carries the returned boundary/midpoint value so a
    pipeline can log it without re-deriving the geometry.
    """
