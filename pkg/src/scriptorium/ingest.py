"""Parsers that bring PAGE XML, ALTO XML and plain text into one document model.

Documents are ordered lists of text lines plus provenance metadata. Reading
order follows element order in the source file: HTR ground-truth exports are
already ordered, and re-sorting by coordinates would be layout analysis,
which this toolkit deliberately does not do.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .errors import EncodingError, FormatError, JsonError, XmlError
from .policy import nfc, segment_graphemes

PAGE_NS_MARKER = "primaresearch.org/PAGE"
ALTO_NS_MARKERS = (
    "loc.gov/standards/alto/ns-v2",
    "loc.gov/standards/alto/ns-v3",
    "loc.gov/standards/alto/ns-v4",
)


@dataclass(frozen=True)
class MetadataRecord:
    """Catalogue facts about the carrier of a transcription."""

    shelfmark: str = ""
    origin: tuple[str, ...] = ()
    date_range: tuple[int, int] | None = None
    institution: str | None = None

    def __post_init__(self):
        if self.date_range is not None and self.date_range[0] > self.date_range[1]:
            raise ValueError("date_range start must not exceed end")


@dataclass(frozen=True)
class TextLine:
    """One physical line of diplomatic text."""

    text: str
    page_ref: str | None = None
    region_ref: str | None = None

    def __post_init__(self):
        if "\n" in self.text or "\r" in self.text:
            raise ValueError("line text must not contain newline characters")


@dataclass(frozen=True)
class Document:
    id: str
    lines: tuple[TextLine, ...]
    metadata: MetadataRecord = MetadataRecord()
    source_format: str = "plain"  # page-xml | alto-xml | plain

    @property
    def text(self) -> str:
        return "\n".join(line.text for line in self.lines)


@dataclass(frozen=True)
class Token:
    """A maximal run of non-space clusters within one line.

    ``span`` is a half-open (start, end) pair of grapheme-cluster offsets
    into the line; punctuation stays attached to its word.
    """

    surface: str
    line: int
    index: int
    span: tuple[int, int]


def _decode(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"invalid UTF-8: {exc}") from exc
    if text.startswith("﻿"):
        text = text[1:]
    return text


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _namespace(tag: str) -> str:
    if tag.startswith("{"):
        return tag[1 : tag.index("}")]
    return ""


def _parse_xml_root(data: bytes | str) -> ET.Element:
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        raise XmlError(str(exc)) from exc


def _clean_line(text: str | None) -> str:
    # Stray line breaks inside a line element are whitespace, not structure.
    return nfc((text or "").replace("\r", " ").replace("\n", " "))


def parse_page_xml(data: bytes | str, doc_id: str = "") -> Document:
    """Parse a PAGE XML ground-truth file (2013+ namespaces).

    One :class:`TextLine` per ``TextLine`` element, carrying the element's own
    ``TextEquiv/Unicode`` content in document order. A missing or empty
    ``Unicode`` element yields an empty line rather than an error.
    """
    root = _parse_xml_root(data)
    ns = _namespace(root.tag)
    if PAGE_NS_MARKER not in ns:
        raise FormatError(
            f"root namespace {ns!r} is not a PAGE namespace; "
            "expected schema.primaresearch.org/PAGE/..."
        )
    q = lambda local: f"{{{ns}}}{local}"

    lines: list[TextLine] = []
    seen: set[int] = set()  # nested TextRegions must not duplicate lines
    for page in root.iter(q("Page")):
        page_ref = page.get("imageFilename") or page.get("id")
        for region in page.iter(q("TextRegion")):
            region_ref = region.get("id")
            for line_el in region.iter(q("TextLine")):
                if id(line_el) in seen:
                    continue
                seen.add(id(line_el))
                text = ""
                for child in line_el:
                    if _localname(child.tag) == "TextEquiv":
                        unicode_el = child.find(q("Unicode"))
                        if unicode_el is not None:
                            text = unicode_el.text or ""
                        break
                lines.append(TextLine(_clean_line(text), page_ref, region_ref))
    return Document(doc_id, tuple(lines), source_format="page-xml")


def parse_alto_xml(data: bytes | str, doc_id: str = "") -> Document:
    """Parse an ALTO (v2-v4) file.

    Line text is reassembled from ``String/@CONTENT`` joined by single
    spaces; an intervening ``HYP`` element suppresses the joining space (the
    hyphen glyph is a line-break artifact, not transcription content).
    """
    root = _parse_xml_root(data)
    ns = _namespace(root.tag)
    if not any(marker in ns for marker in ALTO_NS_MARKERS):
        raise FormatError(
            f"root namespace {ns!r} is not an ALTO v2-v4 namespace"
        )
    q = lambda local: f"{{{ns}}}{local}"

    lines: list[TextLine] = []
    seen: set[int] = set()
    for page in root.iter(q("Page")):
        page_ref = page.get("PHYSICAL_IMG_NR") or page.get("ID")
        for block in page.iter(q("TextBlock")):
            region_ref = block.get("ID")
            for line_el in block.iter(q("TextLine")):
                if id(line_el) in seen:
                    continue
                seen.add(id(line_el))
                parts: list[str] = []
                join_with_space = False
                for child in line_el:
                    local = _localname(child.tag)
                    if local == "String":
                        content = child.get("CONTENT") or ""
                        if parts and join_with_space:
                            parts.append(" ")
                        parts.append(content)
                        join_with_space = True
                    elif local == "SP":
                        join_with_space = True
                    elif local == "HYP":
                        join_with_space = False
                lines.append(TextLine(_clean_line("".join(parts)), page_ref, region_ref))
    return Document(doc_id, tuple(lines), source_format="alto-xml")


def parse_plaintext(data: bytes | str, doc_id: str = "") -> Document:
    """Parse UTF-8 text, one :class:`TextLine` per physical line.

    A trailing newline does not create an empty final line; interior blank
    lines are kept.
    """
    text = _decode(data)
    lines = tuple(TextLine(nfc(line)) for line in text.splitlines())
    return Document(doc_id, lines, source_format="plain")


def sniff_format(data: bytes | str) -> str:
    """Guess page-xml / alto-xml / plain from the content itself."""
    sample = data[:4096]
    if isinstance(sample, (bytes, bytearray)):
        try:
            sample = sample.decode("utf-8", errors="replace")
        except Exception:  # pragma: no cover - replace never raises
            return "plain"
    head = sample.lstrip()
    if head.startswith("<"):
        if PAGE_NS_MARKER in sample:
            return "page-xml"
        if any(marker in sample for marker in ALTO_NS_MARKERS):
            return "alto-xml"
    return "plain"


def parse_any(data: bytes | str, doc_id: str = "") -> Document:
    """Dispatch on :func:`sniff_format`."""
    fmt = sniff_format(data)
    if fmt == "page-xml":
        return parse_page_xml(data, doc_id)
    if fmt == "alto-xml":
        return parse_alto_xml(data, doc_id)
    return parse_plaintext(data, doc_id)


def tokenize_line(text: str, line_index: int = 0) -> list[Token]:
    clusters = segment_graphemes(text)
    tokens: list[Token] = []
    start = None
    for i, cluster in enumerate(clusters):
        if cluster.isspace():
            if start is not None:
                tokens.append(
                    Token(
                        "".join(clusters[start:i]),
                        line_index,
                        len(tokens),
                        (start, i),
                    )
                )
                start = None
        elif start is None:
            start = i
    if start is not None:
        tokens.append(
            Token(
                "".join(clusters[start:]),
                line_index,
                len(tokens),
                (start, len(clusters)),
            )
        )
    return tokens


def tokenize(doc: Document) -> list[Token]:
    """Whitespace tokenization with punctuation left attached.

    Splitting on anything subtler than whitespace would editorialize the
    diplomatic layer; downstream layers may strip punctuation explicitly.
    """
    tokens: list[Token] = []
    for line_index, line in enumerate(doc.lines):
        tokens.extend(tokenize_line(line.text, line_index))
    return tokens


def token_surfaces(doc: Document) -> list[str]:
    return [t.surface for t in tokenize(doc)]


# ---------------------------------------------------------------------------
# Line-per-record JSON corpus serialization
# ---------------------------------------------------------------------------


def dumps_corpus(docs: Iterable[Document]) -> str:
    """Serialize documents as one JSON record per line (id, line, text, page_ref)."""
    records = []
    for doc in docs:
        for i, line in enumerate(doc.lines):
            records.append(
                json.dumps(
                    {"id": doc.id, "line": i, "text": line.text, "page_ref": line.page_ref},
                    ensure_ascii=False,
                )
            )
    return "\n".join(records) + ("\n" if records else "")


def loads_corpus(text: str) -> list[Document]:
    """Inverse of :func:`dumps_corpus`; consecutive records of one id form a document."""
    docs: list[Document] = []
    current_id: str | None = None
    current_lines: list[TextLine] = []

    def flush():
        if current_id is not None:
            docs.append(Document(current_id, tuple(current_lines)))

    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise JsonError(str(exc), location=f"line {lineno}") from exc
        doc_id = record.get("id", "")
        if doc_id != current_id:
            flush()
            current_id = doc_id
            current_lines = []
        current_lines.append(TextLine(nfc(record.get("text", "")), record.get("page_ref")))
    flush()
    return docs


def write_corpus(docs: Iterable[Document], fp: IO[str]) -> None:
    fp.write(dumps_corpus(docs))


def read_corpus(fp: IO[str]) -> list[Document]:
    return loads_corpus(fp.read())
