"""Exception taxonomy shared across the package.

Every error raised by library code derives from StreamcodecError and carries a
stable machine-parsable category string. The CLI prints exactly one line,
"<category>: <message>", and exits nonzero, so scripted callers can branch on
the category without parsing prose.
"""

from __future__ import annotations


class StreamcodecError(Exception):
    """Base class; `category` is the stable identifier printed by the CLI."""

    category = "error"


class ConfigError(StreamcodecError):
    """Bad or unknown configuration fields, malformed config JSON."""

    category = "config-error"


class ContractError(StreamcodecError):
    """A documented precondition or invariant was violated at runtime."""

    category = "contract-error"


class ShapeError(StreamcodecError):
    """Array shapes disagree with the declared model geometry."""

    category = "shape-error"


class ParseError(StreamcodecError):
    """A serialized file could not be decoded; `offset` is the byte position."""

    category = "parse-error"

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class VersionError(ParseError):
    """Wrong magic or unsupported container version."""

    category = "version-error"


class AudioError(StreamcodecError):
    """Unsupported audio encoding (only PCM16 mono WAV is accepted)."""

    category = "audio-error"
