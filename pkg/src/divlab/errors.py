"""Exception types. The CLI maps these onto exit codes (2/3/4)."""

from __future__ import annotations


class ValidationError(ValueError):
    """Input fails a structural invariant (shape, Hermiticity, PSD, trace...)."""


class DomainError(ValidationError):
    """A scalar function was evaluated outside its domain (e.g. log of 0)."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge; carries the best bracket found."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class ResourceCapError(RuntimeError):
    """Requested computation exceeds the configured dimension cap."""
