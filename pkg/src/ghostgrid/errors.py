"""Error types shared across the package.

Every error carries a short machine-readable ``code`` (E_CONFIG, E_VALIDATION,
E_IO, E_PARSE, E_STATE, E_DONE, E_BIND) used by the CLI for exit codes and by
the session server for ``error`` messages.
"""

from __future__ import annotations


class GhostgridError(Exception):
    code = "E_INTERNAL"


class ConfigError(GhostgridError):
    """Invalid configuration: a GridConfig/RunConfig invariant is violated."""

    code = "E_CONFIG"


class ValidationError(GhostgridError):
    """Invalid input data or disruption. ``reason`` is one of the
    disruption reason codes (OUT_OF_BOUNDS, UNREACHABLE, OCCUPIED,
    BAD_PARAMS) when raised by the disruption engine."""

    code = "E_VALIDATION"

    def __init__(self, message: str, reason: str | None = None):
        super().__init__(message)
        self.reason = reason


class StorageError(GhostgridError):
    """File could not be read or written."""

    code = "E_IO"


class ParseError(GhostgridError):
    """Malformed persisted file or wire message. ``line`` is the 1-based
    line number for file parse failures."""

    code = "E_PARSE"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class StateError(GhostgridError):
    """Request referencing unknown or inconsistent session state."""

    code = "E_STATE"


class EpisodeDone(GhostgridError):
    """step() was called on a terminal state."""

    code = "E_DONE"


class BindError(GhostgridError):
    """Session server could not bind its listen socket."""

    code = "E_BIND"
