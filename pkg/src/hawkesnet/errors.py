"""Exception types shared across the package."""

from __future__ import annotations

__all__ = ["HawkesnetError", "DomainError", "SchemaError", "ConvergenceError"]


class HawkesnetError(Exception):
    """Base class for errors raised by this package."""


class DomainError(HawkesnetError, ValueError):
    """Invalid numeric input: bad shape, sign, range, or non-finite value."""


class SchemaError(HawkesnetError, ValueError):
    """Malformed file content: CSV/JSON that does not match the documented layout."""


class ConvergenceError(HawkesnetError, RuntimeError):
    """An iterative routine failed to reach its stated tolerance."""
