"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class BSPDEError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BSPDEError, ValueError):
    """Invalid problem data, grid, tree or configuration document."""


class NumericError(BSPDEError, ArithmeticError):
    """Non-finite values or a failed linear solve during a computation."""


class ExpressionError(BSPDEError, ValueError):
    """Lexing, parsing or evaluation failure in a coefficient expression.

    ``offset`` is the byte offset into the source text (``None`` when the
    failure has no single location).
    """

    def __init__(self, message: str, offset: int | None = None, source: str | None = None):
        self.offset = offset
        self.source = source
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class DriverError(ExpressionError):
    """A driver expression failed to evaluate (domain error, bad identifier)."""


class PreconditionError(BSPDEError, ValueError):
    """An operation was called outside of its documented domain."""
