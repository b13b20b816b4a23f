"""Exception hierarchy shared across the package.

Every error carries a stable machine-readable ``code`` so that service
responses, CLI exit paths, and protocol replies can surface the same
identifier regardless of transport.
"""

from __future__ import annotations


class MaodError(Exception):
    """Base class; ``code`` is the stable identifier used on the wire."""

    code = "MaodError"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class EmptyResponse(MaodError):
    """Input text is empty or whitespace-only; nothing to decompose."""

    code = "EmptyResponse"


class DecompositionError(MaodError):
    """The decomposition pipeline produced output that fails validation.

    Carries the offending validation report; raised instead of silently
    returning a broken response.
    """

    code = "DecompositionError"

    def __init__(self, message: str = "", report=None):
        super().__init__(message)
        self.report = report


class ValidationError(MaodError):
    code = "ValidationError"

    def __init__(self, message: str = "", report=None):
        super().__init__(message)
        self.report = report


class CyclicLinks(MaodError):
    """Link graph contains a cycle; carries the ids on one cycle."""

    code = "CyclicLinks"

    def __init__(self, cycle=()):
        self.cycle = list(cycle)
        super().__init__(f"cycle through {self.cycle}")


class UnknownComponent(MaodError):
    code = "UnknownComponent"


class StaleEvent(MaodError):
    """Event id is not strictly greater than the last applied event."""

    code = "StaleEvent"


class LineageMismatch(MaodError):
    """Artifacts being compared come from different responses."""

    code = "LineageMismatch"


class DuplicateVendor(MaodError):
    code = "DuplicateVendor"


class InvalidMetadata(MaodError):
    code = "InvalidMetadata"


class ModelInitializationError(MaodError):
    code = "ModelInitializationError"


class ProviderFailure(MaodError):
    """Adapter-level fault; surfaced so callers can degrade gracefully."""

    code = "ProviderFailure"


class MalformedMessage(MaodError):
    """Bytes that do not decode to a protocol value (bad JSON, missing or
    unknown fields, unsupported protocol version)."""

    code = "MalformedMessage"


class SessionNotFound(MaodError):
    code = "SessionNotFound"


class ResponseNotFound(MaodError):
    code = "ResponseNotFound"


class CorruptCheckpoint(MaodError):
    code = "CorruptCheckpoint"


class FileProcessingError(MaodError):
    code = "FileProcessingError"


class AgentUnavailable(MaodError):
    """Decomposition agent unreachable or replied with an error; internal
    signal that triggers the monolithic fallback, never a client-facing 500.
    """

    code = "AgentUnavailable"
