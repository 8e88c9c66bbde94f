"""Derive semi-diplomatic and normalised layers from diplomatic text.

Abbreviation expansion and letterform mapping are ordered rewrite rules
applied in a single left-to-right pass: at each position the highest-priority
matching rule fires, its output is never re-matched, and every replacement is
recorded in an offset map between the two layers. Expansions are therefore
marked structurally, not with italics or brackets, which keeps the derived
layer plain-text processable.

Layer semantics:

* ``semi-diplomatic``: expansion rules only, with expansion spans flagged.
* ``normalised``: expansion rules first, then letterform rules over the
  expanded text; the two offset maps are composed into one diplomatic-to-
  normalised map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DuplicateRule, EncodingError, ParseError
from .ingest import Document, TextLine
from .policy import nfc, segment_graphemes

RULE_KINDS = ("expand", "letterform")
RULE_CONTEXTS = ("anywhere", "word-final", "word-initial")
LAYERS = ("semi-diplomatic", "normalised")


@dataclass(frozen=True)
class TransformRule:
    """One rewrite rule over grapheme clusters."""

    kind: str  # expand | letterform
    pattern: str
    replacement: str
    context: str = "anywhere"
    priority: int = 0

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.context not in RULE_CONTEXTS:
            raise ValueError(f"unknown rule context {self.context!r}")
        if not self.pattern:
            raise ValueError("rule pattern must be non-empty")
        if self.kind == "letterform":
            if len(segment_graphemes(self.pattern)) != 1:
                raise ValueError("letterform rules map exactly one cluster")
            if not self.replacement:
                raise ValueError("letterform rules must have a non-empty replacement")

    @property
    def rule_id(self) -> str:
        return f"{self.kind}/{self.pattern}/{self.context}"


@dataclass(frozen=True)
class TransformRuleSet:
    rules: tuple[TransformRule, ...]
    name: str = ""
    version: str = ""

    def __post_init__(self):
        seen: dict[tuple[str, str, str], int] = {}
        for i, rule in enumerate(self.rules):
            key = (rule.kind, nfc(rule.pattern), rule.context)
            if key in seen:
                raise DuplicateRule(
                    f"rule ({rule.kind}, {rule.pattern!r}, {rule.context}) "
                    f"declared twice (rules {seen[key] + 1} and {i + 1})"
                )
            seen[key] = i

    def of_kind(self, kind: str) -> "TransformRuleSet":
        return TransformRuleSet(
            tuple(r for r in self.rules if r.kind == kind), self.name, self.version
        )

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class MapSegment:
    """One aligned span pair between a source and a derived layer.

    ``rule`` is the id of the rule that produced the span (joined with ``+``
    when composition merged overlapping rewrites), or ``None`` for identity
    spans, which are byte-equal across the two layers.
    """

    src: tuple[int, int]  # grapheme-cluster span in the source layer
    dst: tuple[int, int]  # grapheme-cluster span in the derived layer
    rule: str | None = None


@dataclass(frozen=True)
class LayeredText:
    diplomatic: str
    derived: str
    layer: str
    offset_map: tuple[MapSegment, ...]
    expansions_marked: bool = False


def _cluster_slice(clusters: Sequence[str], span: tuple[int, int]) -> str:
    return "".join(clusters[span[0] : span[1]])


# ---------------------------------------------------------------------------
# Rules file format: kind<TAB>pattern<TAB>context<TAB>replacement<TAB>priority
# with the same U+XXXX escape syntax as policy files.
# ---------------------------------------------------------------------------


def parse_transform_rules(source: str | bytes) -> TransformRuleSet:
    """Parse a rules file; conflicting duplicates are rejected."""
    from .policy import _decode_cluster  # same escape syntax

    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"invalid UTF-8: {exc}") from exc

    rules: list[TransformRule] = []
    meta = {"name": "", "version": ""}
    for lineno, raw in enumerate(source.splitlines(), 1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if stripped.startswith("#!"):
                key, _, value = stripped[2:].partition(":")
                key = key.strip().lower()
                if key in meta:
                    meta[key] = value.strip()
            continue
        fields = raw.split("\t")
        if len(fields) < 4:
            raise ParseError(
                "expected kind<TAB>pattern<TAB>context<TAB>replacement[<TAB>priority]",
                location=f"line {lineno}",
            )
        kind = fields[0].strip()
        pattern = nfc(_decode_cluster(fields[1], lineno))
        context = fields[2].strip()
        replacement = nfc(_decode_cluster(fields[3], lineno))
        priority = 0
        if len(fields) > 4 and fields[4].strip():
            try:
                priority = int(fields[4])
            except ValueError as exc:
                raise ParseError(
                    f"priority must be an integer, got {fields[4]!r}",
                    location=f"line {lineno}",
                ) from exc
        try:
            rules.append(TransformRule(kind, pattern, replacement, context, priority))
        except ValueError as exc:
            raise ParseError(str(exc), location=f"line {lineno}") from exc
    return TransformRuleSet(tuple(rules), **meta)


def serialize_transform_rules(rules: TransformRuleSet) -> str:
    from .policy import _encode_cluster

    out = []
    for key in ("name", "version"):
        if getattr(rules, key):
            out.append(f"#! {key}: {getattr(rules, key)}")
    out.append("# kind\tpattern\tcontext\treplacement\tpriority")
    for rule in rules.rules:
        out.append(
            "\t".join(
                (
                    rule.kind,
                    _encode_cluster(rule.pattern),
                    rule.context,
                    _encode_cluster(rule.replacement) if rule.replacement else "",
                    str(rule.priority),
                )
            )
        )
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Rule application
# ---------------------------------------------------------------------------


class _CompiledRule:
    __slots__ = ("rule", "pattern_clusters", "replacement_clusters", "order")

    def __init__(self, rule: TransformRule, order: int):
        self.rule = rule
        self.pattern_clusters = tuple(segment_graphemes(rule.pattern))
        self.replacement_clusters = tuple(segment_graphemes(rule.replacement))
        self.order = order


def _compile(rules: TransformRuleSet) -> list[_CompiledRule]:
    compiled = [_CompiledRule(rule, i) for i, rule in enumerate(rules.rules)]
    # Highest priority first, longer patterns break ties, then declaration order.
    compiled.sort(key=lambda c: (-c.rule.priority, -len(c.pattern_clusters), c.order))
    return compiled


def _context_ok(clusters: Sequence[str], start: int, end: int, context: str) -> bool:
    if context == "word-initial":
        return start == 0 or clusters[start - 1].isspace()
    if context == "word-final":
        return end == len(clusters) or clusters[end].isspace()
    return True


def apply_transform(
    text: str, rules: TransformRuleSet, mark: bool = False, layer: str = "normalised"
) -> LayeredText:
    """Apply a ruleset to one text in a single non-recursive pass.

    At each cluster position the best matching rule fires (priority, then
    pattern length, then declaration order); its replacement is emitted and
    never re-matched. The returned offset map partitions both strings.
    """
    source = nfc(text)
    clusters = segment_graphemes(source)
    compiled = _compile(rules)

    out: list[str] = []
    segments: list[MapSegment] = []
    ident_src = 0
    ident_dst = 0

    def flush_identity(src_end: int, dst_end: int) -> None:
        if src_end > ident_src:
            segments.append(MapSegment((ident_src, src_end), (ident_dst, dst_end), None))

    i = 0
    while i < len(clusters):
        fired = None
        for cand in compiled:
            plen = len(cand.pattern_clusters)
            if tuple(clusters[i : i + plen]) != cand.pattern_clusters:
                continue
            if not _context_ok(clusters, i, i + plen, cand.rule.context):
                continue
            fired = cand
            break
        if fired is None:
            out.append(clusters[i])
            i += 1
            continue
        flush_identity(i, len(out))
        plen = len(fired.pattern_clusters)
        rep = fired.replacement_clusters
        segments.append(
            MapSegment((i, i + plen), (len(out), len(out) + len(rep)), fired.rule.rule_id)
        )
        out.extend(rep)
        i += plen
        ident_src = i
        ident_dst = len(out)
    flush_identity(len(clusters), len(out))

    return LayeredText(source, "".join(out), layer, tuple(segments), expansions_marked=mark)


# ---------------------------------------------------------------------------
# Offset-map composition (diplomatic -> expanded -> normalised)
# ---------------------------------------------------------------------------


def compose_maps(
    first: Sequence[MapSegment],
    second: Sequence[MapSegment],
    a_len: int,
    b_len: int,
    c_len: int,
) -> tuple[MapSegment, ...]:
    """Compose two offset maps A->B and B->C into one A->C map.

    Rewrite segments are atomic: overlapping rewrites from the two passes are
    merged into one composite segment whose rule id joins the contributors.
    Identity stretches compose pointwise.
    """
    # Atomic intervals over B, each carrying its origin.
    atoms: list[tuple[int, int, str]] = []
    for seg in first:
        if seg.rule is not None:
            atoms.append((seg.dst[0], seg.dst[1], seg.rule))
    for seg in second:
        if seg.rule is not None:
            atoms.append((seg.src[0], seg.src[1], seg.rule))
    atoms.sort(key=lambda t: (t[0], t[1]))

    # Merge overlapping atoms into chunks (touching chunks stay separate).
    chunks: list[tuple[int, int, list[str]]] = []
    for b0, b1, rule in atoms:
        if chunks and b0 < chunks[-1][1]:
            c0, c1, rules_in = chunks[-1]
            chunks[-1] = (c0, max(c1, b1), rules_in + [rule])
        else:
            chunks.append((b0, b1, [rule]))

    def a_span(b0: int, b1: int) -> tuple[int, int]:
        return (
            _map_point_back(first, b0, b_len, a_len),
            _map_point_back(first, b1, b_len, a_len),
        )

    def c_span(b0: int, b1: int) -> tuple[int, int]:
        return (
            _map_point_fwd(second, b0, b_len, c_len),
            _map_point_fwd(second, b1, b_len, c_len),
        )

    composite: list[MapSegment] = []
    cursor = 0

    def add_identity(b0: int, b1: int) -> None:
        if b1 > b0:
            composite.append(MapSegment(a_span(b0, b1), c_span(b0, b1), None))

    for b0, b1, rules_in in chunks:
        add_identity(cursor, b0)
        composite.append(MapSegment(a_span(b0, b1), c_span(b0, b1), "+".join(rules_in)))
        cursor = b1
    add_identity(cursor, b_len)
    return tuple(composite)


def _map_point_back(segments: Sequence[MapSegment], pos: int, b_len: int, a_len: int) -> int:
    """B cut point -> A position through an A->B map."""
    if pos == b_len:
        return a_len
    offset_a = offset_b = 0
    for seg in segments:
        # identity gap before this segment
        gap = seg.dst[0] - offset_b
        if pos < seg.dst[0]:
            return offset_a + (pos - offset_b)
        if seg.dst[0] <= pos < seg.dst[1]:
            if seg.rule is None:
                return seg.src[0] + (pos - seg.dst[0])
            if pos == seg.dst[0]:
                return seg.src[0]
            raise ValueError("cut point inside a rewrite target span")
        offset_a = seg.src[1]
        offset_b = seg.dst[1]
    return offset_a + (pos - offset_b)


def _map_point_fwd(segments: Sequence[MapSegment], pos: int, b_len: int, c_len: int) -> int:
    """B cut point -> C position through a B->C map."""
    if pos == b_len:
        return c_len
    offset_b = offset_c = 0
    for seg in segments:
        if pos < seg.src[0]:
            return offset_c + (pos - offset_b)
        if seg.src[0] <= pos < seg.src[1]:
            if seg.rule is None:
                return seg.dst[0] + (pos - seg.src[0])
            if pos == seg.src[0]:
                return seg.dst[0]
            raise ValueError("cut point inside a rewrite source span")
        offset_b = seg.src[1]
        offset_c = seg.dst[1]
    return offset_c + (pos - offset_b)


def derive_text(text: str, rules: TransformRuleSet, target: str, mark: bool | None = None) -> LayeredText:
    """Derive one layer for one text. See module docstring for layer semantics."""
    if target not in LAYERS:
        raise ValueError(f"unknown layer {target!r}; expected one of {LAYERS}")
    if target == "semi-diplomatic":
        marked = True if mark is None else mark
        return apply_transform(text, rules.of_kind("expand"), mark=marked, layer=target)

    marked = False if mark is None else mark
    expanded = apply_transform(text, rules.of_kind("expand"), mark=marked, layer=target)
    final = apply_transform(expanded.derived, rules.of_kind("letterform"), mark=marked, layer=target)
    a_len = len(segment_graphemes(expanded.diplomatic))
    b_len = len(segment_graphemes(expanded.derived))
    c_len = len(segment_graphemes(final.derived))
    composed = compose_maps(expanded.offset_map, final.offset_map, a_len, b_len, c_len)
    return LayeredText(expanded.diplomatic, final.derived, target, composed, expansions_marked=marked)


def derive_layer(
    doc: Document, rules: TransformRuleSet, target: str
) -> tuple[Document, list[LayeredText]]:
    """Derive a layer for every line of a document.

    Returns the derived document (same line structure, derived text) together
    with the per-line :class:`LayeredText` records; the original diplomatic
    document is left untouched.
    """
    layered: list[LayeredText] = []
    new_lines: list[TextLine] = []
    for line in doc.lines:
        lt = derive_text(line.text, rules, target)
        layered.append(lt)
        new_lines.append(TextLine(lt.derived, line.page_ref, line.region_ref))
    derived_doc = Document(doc.id, tuple(new_lines), doc.metadata, doc.source_format)
    return derived_doc, layered


# ---------------------------------------------------------------------------
# Offset-map consumers
# ---------------------------------------------------------------------------


def invert_layer(layered: LayeredText) -> str:
    """Reconstruct the diplomatic text from the derived text plus the map.

    Identity spans are read from the derived layer, rewrite spans substitute
    their source spans back; if the offset map is consistent, the result is
    byte-identical to the stored diplomatic text.
    """
    src_clusters = segment_graphemes(layered.diplomatic)
    dst_clusters = segment_graphemes(layered.derived)
    parts: list[str] = []
    for seg in layered.offset_map:
        if seg.rule is None:
            parts.append(_cluster_slice(dst_clusters, seg.dst))
        else:
            parts.append(_cluster_slice(src_clusters, seg.src))
    return "".join(parts)


def map_derived_span_to_source(layered: LayeredText, span: tuple[int, int]) -> tuple[int, int]:
    """Map a derived-layer cluster span to the smallest covering source span.

    Rewrite segments are atomic: touching any part of a replacement pulls in
    the whole source pattern. A rewrite with an empty replacement counts as
    covered only when its position lies strictly inside the span.
    """
    d0, d1 = span
    b_len = len(segment_graphemes(layered.derived))
    a_len = len(segment_graphemes(layered.diplomatic))
    if d0 >= d1:
        pos = _map_point_back(layered.offset_map, d0, b_len, a_len)
        return (pos, pos)
    lo = hi = None
    for seg in layered.offset_map:
        s_d0, s_d1 = seg.dst
        if s_d0 == s_d1:
            overlaps = d0 < s_d0 < d1
        else:
            overlaps = s_d1 > d0 and s_d0 < d1
        if not overlaps:
            continue
        if seg.rule is None:
            s0 = seg.src[0] + max(0, d0 - s_d0)
            s1 = seg.src[0] + (min(s_d1, d1) - s_d0)
        else:
            s0, s1 = seg.src
        lo = s0 if lo is None else min(lo, s0)
        hi = s1 if hi is None else max(hi, s1)
    if lo is None:
        pos = _map_point_back(layered.offset_map, d0, b_len, a_len)
        return (pos, pos)
    return (lo, hi)


def diplomatic_slice(layered: LayeredText, derived_span: tuple[int, int]) -> str:
    """The diplomatic text behind a derived-layer cluster span."""
    src_span = map_derived_span_to_source(layered, derived_span)
    return _cluster_slice(segment_graphemes(layered.diplomatic), src_span)


def find_unexpanded(layered: LayeredText, rules: TransformRuleSet) -> list[tuple[int, str]]:
    """Positions in the derived text where an expand pattern still occurs.

    Context-blocked or ambiguous abbreviations simply fail to match during
    derivation; this reports them so they can be reviewed rather than
    silently left behind.
    """
    clusters = segment_graphemes(layered.derived)
    patterns = {
        tuple(segment_graphemes(r.pattern)) for r in rules.rules if r.kind == "expand"
    }
    hits: list[tuple[int, str]] = []
    for i in range(len(clusters)):
        for pat in patterns:
            if tuple(clusters[i : i + len(pat)]) == pat:
                hits.append((i, "".join(pat)))
    return sorted(hits)


def to_json_record(layered: LayeredText) -> dict:
    """JSON-encodable export of one layered line."""
    return {
        "diplomatic": layered.diplomatic,
        "derived": layered.derived,
        "layer": layered.layer,
        "expansions_marked": layered.expansions_marked,
        "offset_map": [
            {"src": list(seg.src), "dst": list(seg.dst), "rule": seg.rule}
            for seg in layered.offset_map
        ],
    }
