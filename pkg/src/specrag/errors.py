"""Exception types shared across the package."""

from __future__ import annotations


class SpecragError(Exception):
    """Base class for all errors raised by this package."""


class RootNotFound(SpecragError):
    """Corpus root directory does not exist or is not a directory."""


class InvalidParams(SpecragError):
    """Configuration or parameter values violate their invariants."""


class EmptyInput(SpecragError):
    """An operation received empty text where non-empty input is required."""


class NoTokens(SpecragError):
    """Text contains no alphanumeric tokens and cannot be embedded."""


class DimMismatch(SpecragError):
    """Vector dimensions disagree between operands or with the index."""


class DuplicateId(SpecragError):
    """A chunk id is already present in the index."""


class FormatError(SpecragError):
    """Persisted index files are malformed or truncated."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class VersionMismatch(SpecragError):
    """Persisted index was written by an incompatible format version."""


class UnknownSession(SpecragError):
    """No session exists for the given session id."""


class ProviderError(SpecragError):
    """A remote provider call failed after retries were exhausted."""

    def __init__(self, message: str, status: int | None = None, body_excerpt: str = ""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


class EmptyResponse(ProviderError):
    """The provider returned a response with no usable content."""
