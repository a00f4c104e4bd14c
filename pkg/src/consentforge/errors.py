"""Exception taxonomy shared across the pipeline.

Every error carries a stable ``code`` so the HTTP layer and the CLI can map
failures to response envelopes / exit codes without string matching.
"""

from __future__ import annotations

from typing import Any


class ConsentForgeError(Exception):
    """Base class for all domain errors."""

    code = "internal_error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details = details


class MalformedInput(ConsentForgeError):
    """Input document violates structural preconditions."""

    code = "malformed_input"


class BackendUnavailable(ConsentForgeError):
    """Remote model or embedding endpoint could not be reached."""

    code = "backend_unavailable"


class BackendTimeout(ConsentForgeError):
    code = "backend_timeout"


class DimensionMismatch(ConsentForgeError):
    code = "dimension_mismatch"


class SchemaViolation(ConsentForgeError):
    """Structured output failed validation after all retries."""

    code = "schema_violation"


class ScriptExhausted(ConsentForgeError):
    """Scripted mock backend has no response left for a tag."""

    code = "script_exhausted"


class ExtractionEmpty(ConsentForgeError):
    """Table extraction found no candidate pages or no content."""

    code = "extraction_empty"


class VersionConflict(ConsentForgeError):
    """Edit was built against a stale table version."""

    code = "version_conflict"


class InvalidEdit(ConsentForgeError):
    """Edit would leave the table in an invariant-violating state."""

    code = "invalid_edit"


class NotApproved(ConsentForgeError):
    """A table must be approved before this operation may use it."""

    code = "not_approved"


class UnknownSection(ConsentForgeError):
    code = "unknown_section"


class CitationViolation(ConsentForgeError):
    """Draft cites a chunk or table that is not part of its context."""

    code = "citation_violation"


class EmptyContext(ConsentForgeError):
    """Retrieval produced no chunks and no table narratives."""

    code = "empty_context"


class DuplicateSection(ConsentForgeError):
    code = "duplicate_section"


class EmptyInput(ConsentForgeError):
    """Metric computed over an empty verdict list."""

    code = "empty_input"


class LengthMismatch(ConsentForgeError):
    code = "length_mismatch"


class PreconditionFailed(ConsentForgeError):
    """Project state machine forbids the requested transition."""

    code = "precondition_failed"


class NotFound(ConsentForgeError):
    code = "not_found"
