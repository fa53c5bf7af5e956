"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SqlRefineError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(SqlRefineError):
    """Malformed schema document or invariant violation, with a location."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{message}{f' (at {location})' if location else ''}")


class SqlSyntaxError(SqlRefineError):
    """Token-level parse failure: position plus the tokens that were expected."""

    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        self.position = position
        self.expected = expected
        hint = f"; expected {' | '.join(expected)}" if expected else ""
        super().__init__(f"{message} at position {position}{hint}")


class ResolutionError(SqlRefineError):
    """A column or table reference that does not resolve against the schema."""

    def __init__(self, message: str, entity: str):
        self.entity = entity
        super().__init__(message)


class ExplainError(SqlRefineError):
    """A clause contained a token outside the translation vocabulary."""


class EditError(SqlRefineError):
    """Direct transformation could not be applied to the clause."""


class GenerationError(SqlRefineError):
    """Rule-based or remote clause generation failed."""


class RemoteBackendError(SqlRefineError):
    """A remote backend call failed (timeout, bad status, malformed payload)."""

    def __init__(self, message: str, retryable: bool = True):
        self.retryable = retryable
        super().__init__(message)


class ComposeError(SqlRefineError):
    """Clause recomposition failed (e.g. no foreign-key path between tables)."""


class SessionError(SqlRefineError):
    """Session-level failure: unknown session, invalid step index, bad edit."""
