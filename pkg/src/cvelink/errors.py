"""Exception hierarchy shared across the package.

Everything raised deliberately by this package derives from
:class:`CvelinkError`, so callers can catch one type at the boundary.
Preconditions stated on individual functions raise ``ValueError``;
those are programming errors, not operational ones.
"""

from __future__ import annotations


class CvelinkError(Exception):
    """Base class for all operational errors raised by this package."""


class IngestionError(CvelinkError):
    """A source document stream could not be read or violates its format.

    ``byte_offset`` points at the offending position when the failure is
    tied to a location in the stream, else it is None.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class EmptyCorpusError(IngestionError):
    """Parsing finished with zero usable records."""


class SamplingError(CvelinkError):
    """A sampling pool is too small for the requested draw."""


class InputError(CvelinkError):
    """A runtime input (query text, request payload) is unusable."""


class TransportError(CvelinkError):
    """A remote embedding call failed after retries."""


class ModelLoadError(CvelinkError):
    """A portable model directory is missing, incomplete, or incompatible."""


class FormatError(CvelinkError):
    """A persisted file has the wrong magic or an unsupported version."""


class CorruptionError(CvelinkError):
    """A persisted file is structurally damaged (truncated, bad norms)."""


class PersistenceError(CvelinkError):
    """A cache or index file could not be written."""


class ResolutionError(CvelinkError):
    """A CVE id required by an evaluation could not be resolved to text."""
