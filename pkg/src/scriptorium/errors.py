"""Exception hierarchy shared across the toolkit.

Everything raised on purpose derives from :class:`ScriptoriumError`, so the
CLI can translate any expected failure into a usage/IO exit code.
"""

from __future__ import annotations


class ScriptoriumError(Exception):
    """Base class for all errors raised by scriptorium."""


class EncodingError(ScriptoriumError):
    """Input bytes are not valid UTF-8."""


class ParseError(ScriptoriumError):
    """A structured input file could not be parsed."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class DuplicateEntry(ParseError):
    """The same grapheme cluster is declared twice in one policy."""

    def __init__(self, cluster: str, lines: tuple[int, int]):
        self.cluster = cluster
        self.lines = lines
        super().__init__(
            f"cluster {cluster!r} declared twice (lines {lines[0]} and {lines[1]})"
        )


class EmptyPolicy(ParseError):
    """A policy file declares no entries at all."""


class DuplicateRule(ParseError):
    """Two transform rules share the same (kind, pattern, context)."""


class DuplicateVerse(ParseError):
    """A reference text declares the same verse key twice."""


class XmlError(ParseError):
    """Malformed XML input."""


class JsonError(ParseError):
    """Malformed JSON input."""


class FormatError(ScriptoriumError):
    """Well-formed input in an unexpected schema (e.g. ALTO fed to the PAGE parser)."""


class UnsupportedVersion(ScriptoriumError):
    """A IIIF manifest is neither Presentation API 2.x nor 3.x."""


class NoCanvases(ScriptoriumError):
    """A IIIF manifest contains no canvases."""


class NetworkError(ScriptoriumError):
    """A manifest fetch failed at the transport level after all retries."""


class HttpStatusError(ScriptoriumError):
    """A manifest fetch got a non-2xx HTTP response."""

    def __init__(self, status: int, url: str = ""):
        self.status = status
        self.url = url
        super().__init__(f"HTTP {status} for {url}" if url else f"HTTP {status}")


class EmptyReference(ScriptoriumError):
    """An error-rate reference document contains zero graphemes."""

    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"reference document {doc_id!r} has zero graphemes")


class DegenerateReference(ScriptoriumError):
    """Every candidate word in a Delta reference set has zero variance."""


class WindowTooLarge(ScriptoriumError):
    """A rolling window is longer than the document it slides over."""


class NoCandidates(ScriptoriumError):
    """Rolling classification was asked to run with no candidate profiles."""


class TooFewDocuments(ScriptoriumError):
    """TF-IDF/PCA needs at least three documents."""


class EmptyVocabulary(ScriptoriumError):
    """No vocabulary terms survive filtering against the corpus."""


class BadPattern(ScriptoriumError):
    """A concordance pattern uses `*` anywhere but the final position."""


class EmptyData(ScriptoriumError):
    """A plot was requested for an empty data series."""
