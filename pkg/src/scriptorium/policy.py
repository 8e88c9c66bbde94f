"""Character policies: the machine-readable core of a transcription statement.

A policy declares the closed inventory of grapheme clusters a transcriber is
allowed to use, one entry per cluster, each tagged with a class (base letter,
special letterform, combining mark, ...). Against such a policy a corpus can
be validated cluster by cluster, and the policy itself can be audited for
choices that common NLP preprocessing would silently destroy (private-use
codepoints, case collisions, delimiter characters inside clusters).

All text is canonicalized to NFC on ingest and compared on extended grapheme
clusters, so combining abbreviation marks always travel with their base
letter.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import regex

from .errors import DuplicateEntry, EmptyPolicy, EncodingError, ParseError

GRAPHEME_CLASSES = (
    "base-letter",
    "special-letterform",
    "combining-mark",
    "superscript-letter",
    "punctuation",
    "numeral",
    "space",
)

# Extended grapheme cluster, per Unicode segmentation rules.
_GRAPHEME_RE = regex.compile(r"\X")

# All three private-use ranges, not just the BMP one.
_PUA_RANGES = ((0xE000, 0xF8FF), (0xF0000, 0xFFFFD), (0x100000, 0x10FFFD))

# Characters that common tokenizers treat as word delimiters.
_APOSTROPHES = "'’ʼ"
_HYPHENS = "-‐‑"
_BRACKETS = "()[]{}<>"


def nfc(text: str) -> str:
    """Canonical-composed normalization, the single form used everywhere."""
    return unicodedata.normalize("NFC", text)


def segment_graphemes(text: str | bytes) -> list[str]:
    """Split text into extended grapheme clusters of its NFC form.

    The concatenation of the returned clusters equals ``nfc(text)``; combining
    marks never open a cluster unless the text itself starts with one.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"invalid UTF-8: {exc}") from exc
    return _GRAPHEME_RE.findall(nfc(text))


def _is_pua(cp: int) -> bool:
    return any(lo <= cp <= hi for lo, hi in _PUA_RANGES)


@dataclass(frozen=True)
class GraphemeEntry:
    """One authorized cluster: the Unicode sequence plus its editorial class."""

    cluster: str
    category: str
    letterform_of: str | None = None
    description: str = ""

    def __post_init__(self):
        if not self.cluster:
            raise ValueError("entry cluster must be non-empty")
        if self.category not in GRAPHEME_CLASSES:
            raise ValueError(
                f"unknown grapheme class {self.category!r}; "
                f"expected one of {', '.join(GRAPHEME_CLASSES)}"
            )

    @property
    def codepoints(self) -> str:
        """Hex escape rendering, e.g. ``U+006E+U+0304``."""
        return "+".join(f"U+{ord(ch):04X}" for ch in self.cluster)


@dataclass(frozen=True)
class CharacterPolicy:
    """An ordered, duplicate-free inventory of authorized grapheme clusters."""

    entries: tuple[GraphemeEntry, ...]
    name: str = ""
    version: str = ""
    notes: str = ""
    normalization_form: str = "NFC"

    def __post_init__(self):
        seen: dict[str, int] = {}
        for i, entry in enumerate(self.entries):
            key = nfc(entry.cluster)
            if key in seen:
                raise DuplicateEntry(entry.cluster, (seen[key] + 1, i + 1))
            seen[key] = i

    @cached_property
    def cluster_set(self) -> frozenset[str]:
        return frozenset(nfc(e.cluster) for e in self.entries)

    def __contains__(self, cluster: str) -> bool:
        return nfc(cluster) in self.cluster_set

    def __len__(self) -> int:
        return len(self.entries)


class Violation(NamedTuple):
    line: int
    grapheme: int
    cluster: str
    reason: str


@dataclass(frozen=True)
class ViolationReport:
    """Outcome of validating a text against a policy."""

    violations: tuple[Violation, ...]
    total_graphemes: int

    @property
    def clean(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class AuditFinding:
    """One NLP-safety problem discovered in a policy."""

    kind: str  # private-use-codepoint | lowercase-collision | delimiter-conflict | normalization-instability
    subjects: tuple[str, ...]
    explanation: str


@dataclass(frozen=True)
class ModelRecord:
    """One row of a model-history table: ground truth volume plus error rates."""

    name: str
    pages: int
    lines: int
    words: int
    cer_train: float
    cer_val: float

    def __post_init__(self):
        for label in ("pages", "lines", "words"):
            if getattr(self, label) < 0:
                raise ValueError(f"{label} must be non-negative")
        for label in ("cer_train", "cer_val"):
            value = getattr(self, label)
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{label} must be a percentage in [0, 100]")


@dataclass(frozen=True)
class CorpusSummary:
    document_count: int = 0
    shelfmarks: tuple[str, ...] = ()


@dataclass(frozen=True)
class TranscriptionStatement:
    """Everything a reuser needs to know about how a corpus was transcribed."""

    policy: CharacterPolicy
    corpus_summary: CorpusSummary = field(default_factory=CorpusSummary)
    model_history: tuple[ModelRecord, ...] = ()
    principles_text: str = ""


# ---------------------------------------------------------------------------
# Policy file format
#
# UTF-8, line oriented: cluster<TAB>class<TAB>letterform_of?<TAB>description
# The cluster field is either literal text or `U+XXXX(+U+YYYY...)` escapes.
# `#` begins a comment; `#!` comments carry name/version/notes directives.
# ---------------------------------------------------------------------------

_ESCAPE_RE = regex.compile(r"^U\+[0-9A-Fa-f]+(\+U\+[0-9A-Fa-f]+)*$")


def _decode_cluster(text: str, lineno: int) -> str:
    if not text.startswith("U+"):
        return text
    if not _ESCAPE_RE.match(text):
        raise ParseError(f"malformed hex escape {text!r}", location=f"line {lineno}")
    chars = []
    for part in text.split("+U+"):
        hexval = part[2:] if part.startswith("U+") else part
        cp = int(hexval, 16)
        if cp > 0x10FFFF or 0xD800 <= cp <= 0xDFFF:
            raise ParseError(
                f"codepoint U+{cp:04X} out of range", location=f"line {lineno}"
            )
        chars.append(chr(cp))
    return "".join(chars)


def _encode_cluster(cluster: str) -> str:
    needs_escape = (
        cluster.startswith(("#", "U+"))
        or any(ch.isspace() or unicodedata.category(ch) in ("Cc", "Cf") for ch in cluster)
        or unicodedata.combining(cluster[0]) != 0
    )
    if needs_escape:
        return "+".join(f"U+{ord(ch):04X}" for ch in cluster)
    return cluster


def parse_policy(source: str | bytes) -> CharacterPolicy:
    """Parse a policy file into a :class:`CharacterPolicy`.

    Clusters are normalized to NFC on ingest; duplicates after normalization
    are rejected. Private-use or otherwise ill-advised entries parse fine —
    flagging them is :func:`audit_nlp_safety`'s job, not the parser's.
    """
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"invalid UTF-8: {exc}") from exc

    entries: list[GraphemeEntry] = []
    seen: dict[str, int] = {}
    meta = {"name": "", "version": "", "notes": ""}

    for lineno, raw in enumerate(source.splitlines(), 1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if stripped.startswith("#!"):
                directive = stripped[2:].strip()
                key, _, value = directive.partition(":")
                key = key.strip().lower()
                if key in meta:
                    meta[key] = value.strip()
            continue
        fields = raw.split("\t")
        if len(fields) < 2:
            raise ParseError(
                "expected cluster<TAB>class[<TAB>letterform_of[<TAB>description]]",
                location=f"line {lineno}",
            )
        cluster = nfc(_decode_cluster(fields[0], lineno))
        category = fields[1].strip()
        letterform_of = fields[2].strip() if len(fields) > 2 and fields[2].strip() else None
        description = fields[3].strip() if len(fields) > 3 else ""
        if cluster in seen:
            raise DuplicateEntry(cluster, (seen[cluster], lineno))
        seen[cluster] = lineno
        try:
            entry = GraphemeEntry(cluster, category, letterform_of, description)
        except ValueError as exc:
            raise ParseError(str(exc), location=f"line {lineno}") from exc
        entries.append(entry)

    if not entries:
        raise EmptyPolicy("policy declares no entries")
    return CharacterPolicy(tuple(entries), **meta)


def serialize_policy(policy: CharacterPolicy) -> str:
    """Render a policy back to its file format (inverse of :func:`parse_policy`)."""
    out = []
    for key in ("name", "version", "notes"):
        value = getattr(policy, key)
        if value:
            out.append(f"#! {key}: {value}")
    out.append("# cluster\tclass\tletterform_of\tdescription")
    for entry in policy.entries:
        out.append(
            "\t".join(
                (
                    _encode_cluster(nfc(entry.cluster)),
                    entry.category,
                    entry.letterform_of or "",
                    entry.description,
                )
            )
        )
    return "\n".join(out) + "\n"


def validate_lines(lines: Iterable[str], policy: CharacterPolicy) -> ViolationReport:
    """Check every grapheme cluster of every line for policy membership."""
    authorized = policy.cluster_set
    violations: list[Violation] = []
    total = 0
    for line_index, line in enumerate(lines):
        for g_index, cluster in enumerate(segment_graphemes(line)):
            total += 1
            if cluster not in authorized:
                violations.append(
                    Violation(line_index, g_index, cluster, "unauthorized cluster")
                )
    return ViolationReport(tuple(violations), total)


def validate_text(text: str, policy: CharacterPolicy) -> ViolationReport:
    """Validate a text against a policy, line by line.

    Newlines are treated as line separators, not graphemes, so positions in
    the report are (line, cluster) pairs and ``total_graphemes`` counts every
    cluster except the separators themselves.
    """
    return validate_lines(text.splitlines(), policy)


def audit_nlp_safety(policy: CharacterPolicy) -> list[AuditFinding]:
    """Flag policy entries that routine NLP preprocessing would mangle.

    Four checks: private-use codepoints (fragile across fonts and tools),
    case-fold collisions between distinct entries (lowercasing erases the
    distinction), tokenizer delimiter characters inside non-space entries,
    and entries that are not NFC-stable.
    """
    findings: list[AuditFinding] = []

    for entry in policy.entries:
        pua = [ord(ch) for ch in entry.cluster if _is_pua(ord(ch))]
        if pua:
            cps = ", ".join(f"U+{cp:04X}" for cp in pua)
            findings.append(
                AuditFinding(
                    "private-use-codepoint",
                    (entry.cluster,),
                    f"entry {entry.codepoints} uses private-use codepoint(s) {cps}; "
                    "rendering and interchange depend on a specific font",
                )
            )

    folded: dict[str, list[GraphemeEntry]] = {}
    for entry in policy.entries:
        folded.setdefault(entry.cluster.casefold(), []).append(entry)
    for fold_key in sorted(folded, key=lambda k: min(e.cluster for e in folded[k])):
        group = folded[fold_key]
        if len(group) < 2:
            continue
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                a, b = group[i], group[j]
                findings.append(
                    AuditFinding(
                        "lowercase-collision",
                        (a.cluster, b.cluster),
                        f"entries {a.cluster!r} and {b.cluster!r} case-fold to the "
                        "same form; lowercasing erases the distinction",
                    )
                )

    for entry in policy.entries:
        if entry.category == "space":
            continue
        offenders = []
        for ch in entry.cluster:
            if ch in _APOSTROPHES:
                offenders.append("apostrophe")
            elif ch in _HYPHENS:
                offenders.append("hyphen")
            elif ch in _BRACKETS:
                offenders.append("bracket")
            elif ch.isspace():
                offenders.append("blank")
        if offenders:
            findings.append(
                AuditFinding(
                    "delimiter-conflict",
                    (entry.cluster,),
                    f"entry {entry.codepoints} contains {', '.join(sorted(set(offenders)))}; "
                    "tokenizers split on such characters",
                )
            )

    for entry in policy.entries:
        if nfc(entry.cluster) != entry.cluster:
            findings.append(
                AuditFinding(
                    "normalization-instability",
                    (entry.cluster,),
                    f"entry {entry.codepoints} is not canonical-composed; "
                    "normalization rewrites it to a different byte sequence",
                )
            )

    return findings


def _display_cluster(cluster: str) -> str:
    shown = cluster
    if unicodedata.combining(cluster[0]) != 0:
        shown = "◌" + cluster  # dotted circle carrier for bare marks
    return shown.replace("|", "\\|")


def emit_statement(statement: TranscriptionStatement) -> str:
    """Render a transcription statement as markdown.

    Output is deterministic: identical statements produce byte-identical
    documents.
    """
    policy = statement.policy
    title = policy.name or "Untitled policy"
    out: list[str] = [f"# Transcription statement: {title}"]
    if policy.version:
        out.append(f"Policy version: {policy.version}")
    out.append("")

    if policy.notes:
        out += ["## Notes", "", policy.notes, ""]

    out += [
        f"## Character inventory ({len(policy.entries)} entries)",
        "",
        "| Cluster | Codepoints | Class | Letterform of | Description |",
        "| --- | --- | --- | --- | --- |",
    ]
    for entry in policy.entries:
        out.append(
            "| {} | {} | {} | {} | {} |".format(
                _display_cluster(entry.cluster),
                entry.codepoints,
                entry.category,
                entry.letterform_of or "",
                entry.description.replace("|", "\\|"),
            )
        )
    out.append("")

    summary = statement.corpus_summary
    out += ["## Corpus", "", f"- Documents: {summary.document_count}"]
    if summary.shelfmarks:
        out.append(f"- Shelfmarks: {'; '.join(summary.shelfmarks)}")
    out.append("")

    out += ["## Model history", ""]
    if statement.model_history:
        out += [
            "| Model | Pages | Lines | Words | CER-train (%) | CER-val (%) |",
            "| --- | ---: | ---: | ---: | ---: | ---: |",
        ]
        for row in statement.model_history:
            out.append(
                f"| {row.name} | {row.pages} | {row.lines} | {row.words} "
                f"| {row.cer_train:.2f} | {row.cer_val:.2f} |"
            )
    else:
        out.append("No models trained on this corpus.")
    out.append("")

    if statement.principles_text:
        out += ["## Principles of transcription", "", statement.principles_text, ""]

    return "\n".join(out)


def sample_text(policy: CharacterPolicy, length: int, rng) -> str:
    """Draw a random single-line text from a policy's inventory.

    Handy for preliminary spot checks and for property tests: any text built
    this way validates clean against the policy it was drawn from. Bare
    combining-mark entries are skipped, since appending one would merge into
    the preceding cluster instead of adding a new authorized one.
    """
    free = [
        e.cluster for e in policy.entries if unicodedata.combining(e.cluster[0]) == 0
    ]
    if not free:
        raise ValueError("policy has no non-combining entries to sample from")
    return "".join(rng.choice(free) for _ in range(length))
