"""Triple knowledge base: ingest, filtering, and concept -> triple lookup.

Two input formats are accepted:

* fixture TSV: ``relation\\tsubject\\tobject[\\tweight]``, no header;
* 5-column assertion dumps with ``/c/en/<word>`` concept URIs and
  ``/r/<Name>`` relation URIs, from which English single-word concepts
  are extracted.

The format is auto-detected from the column count. Concepts are
lowercased at ingest; multi-word concepts (whitespace or underscore),
non-English concepts, and unknown relations are dropped and tallied.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

# Closed relation set. Rendering templates cover exactly these names.
RELATIONS: tuple[str, ...] = (
    "DefinedAs",
    "DesireOf",
    "HasA",
    "HasFirstSubevent",
    "HasLastSubevent",
    "HasPrerequisite",
    "HasProperty",
    "HasSubevent",
    "IsA",
    "MadeOf",
    "MotivatedByGoal",
    "NotCapableOf",
    "NotDesires",
    "NotHasA",
    "NotHasProperty",
    "NotIsA",
    "NotMadeOf",
    "PartOf",
    "RelatedTo",
    "SymbolOf",
    "UsedFor",
    "AtLocation",
    "CapableOf",
    "Causes",
    "CausesDesire",
    "CreatedBy",
    "Desires",
    "HasPainCharacter",
    "HasPainIntensity",
    "InheritsFrom",
    "InstanceOf",
    "LocatedNear",
    "LocationOfAction",
    "ReceivesAction",
    "Antonym",
    "DerivedFrom",
    "DistinctFrom",
    "EtymologicallyRelatedTo",
    "FormOf",
    "HasContext",
    "SimilarTo",
    "Synonym",
    "dbpediacapital",
    "dbpediaproduct",
)
RELATION_SET = frozenset(RELATIONS)


class KbError(Exception):
    """Base class for knowledge-base errors."""


class UnreadableFile(KbError):
    pass


class MalformedRow(KbError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyKb(KbError):
    pass


class CacheMismatch(KbError):
    pass


@dataclass(frozen=True)
class Triple:
    """One (subject, relation, object) commonsense assertion."""

    subject: str
    relation: str
    object: str
    weight: float = 1.0

    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)


@dataclass(frozen=True)
class KbFilter:
    """Row filter applied during :func:`load_kb`.

    ``strict`` turns malformed rows into :class:`MalformedRow` errors
    instead of skip-and-tally. ``allowed_relations`` narrows the closed
    relation set (never widens it).
    """

    strict: bool = False
    allowed_relations: frozenset[str] | None = None

    def relations(self) -> frozenset[str]:
        if self.allowed_relations is None:
            return RELATION_SET
        return self.allowed_relations & RELATION_SET


@dataclass
class LoadReport:
    """Per-reason drop tallies from one ingest."""

    rows_read: int = 0
    kept: int = 0
    dropped_multi_word: int = 0
    dropped_unknown_relation: int = 0
    dropped_non_english: int = 0
    dropped_malformed: int = 0
    dropped_duplicate: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


@dataclass
class KnowledgeBase:
    """Deduplicated triples in stable load order."""

    triples: tuple[Triple, ...]
    source_digest: str
    load_report: LoadReport = field(default_factory=LoadReport)
    _keys: frozenset[tuple[str, str, str]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._keys = frozenset(t.key() for t in self.triples)

    def __len__(self) -> int:
        return len(self.triples)


@dataclass
class ConceptIndex:
    """Inverted index: concept -> ascending triple ordinals in the KB."""

    postings: dict[str, list[int]]
    kb_ref: KnowledgeBase

    def __contains__(self, concept: str) -> bool:
        return concept in self.postings

    def concepts(self) -> set[str]:
        return set(self.postings)


def _is_single_word(concept: str) -> bool:
    return bool(concept) and "_" not in concept and not any(c.isspace() for c in concept)


def _parse_fixture_row(cols: list[str]) -> tuple[str, str, str, float]:
    relation, subject, obj = cols[0], cols[1], cols[2]
    weight = float(cols[3]) if len(cols) == 4 else 1.0
    return relation, subject.lower(), obj.lower(), weight


def _parse_assertion_row(cols: list[str]) -> tuple[str, str, str, float] | str:
    """Extract (relation, subject, object, weight) from a 5-column dump row.

    Returns a drop-reason string instead when the row fails the English
    single-word filter.
    """
    rel_uri, start_uri, end_uri = cols[1], cols[2], cols[3]
    if not rel_uri.startswith("/r/"):
        return "malformed"
    relation = rel_uri[3:].replace("/", "")
    concepts = []
    for uri in (start_uri, end_uri):
        parts = uri.split("/")
        # expect ["", "c", lang, word]; extra segments mean sense-tagged URIs
        if len(parts) < 4 or parts[1] != "c":
            return "malformed"
        if parts[2] != "en":
            return "non_english"
        if len(parts) != 4:
            return "multi_word"
        concepts.append(parts[3].lower())
    weight = 1.0
    if len(cols) >= 5 and cols[4].strip():
        try:
            meta = json.loads(cols[4])
            weight = float(meta.get("weight", 1.0))
        except (ValueError, TypeError):
            return "malformed"
    return relation, concepts[0], concepts[1], weight


def load_kb(path: str | Path, kb_filter: KbFilter | None = None) -> KnowledgeBase:
    """Load and deduplicate a triple KB from ``path``.

    Rows failing the filter are dropped and tallied in the returned
    KB's ``load_report``. With ``strict`` filtering, structurally
    malformed rows raise :class:`MalformedRow` instead.
    """
    kb_filter = kb_filter or KbFilter()
    allowed = kb_filter.relations()
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise UnreadableFile(str(path)) from exc

    report = LoadReport()
    seen: dict[tuple[str, str, str], None] = {}
    triples: list[Triple] = []

    def drop(reason: str, line_no: int, detail: str) -> None:
        if kb_filter.strict and reason == "malformed":
            raise MalformedRow(line_no, detail)
        setattr(report, f"dropped_{reason}", getattr(report, f"dropped_{reason}") + 1)

    for line_no, line in enumerate(raw.decode("utf-8").split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        report.rows_read += 1
        cols = line.split("\t")
        if len(cols) in (3, 4):
            try:
                parsed = _parse_fixture_row(cols)
            except ValueError:
                drop("malformed", line_no, "bad weight")
                continue
        elif len(cols) >= 5:
            parsed = _parse_assertion_row(cols)
        else:
            drop("malformed", line_no, f"expected 3-5 columns, got {len(cols)}")
            continue
        if isinstance(parsed, str):
            drop(parsed, line_no, "assertion row rejected")
            continue
        relation, subject, obj, weight = parsed
        if relation not in allowed:
            drop("unknown_relation", line_no, relation)
            continue
        if not (_is_single_word(subject) and _is_single_word(obj)):
            drop("multi_word", line_no, f"{subject} / {obj}")
            continue
        if weight < 0:
            drop("malformed", line_no, "negative weight")
            continue
        key = (subject, relation, obj)
        if key in seen:
            report.dropped_duplicate += 1
            continue
        seen[key] = None
        triples.append(Triple(subject, relation, obj, weight))
        report.kept += 1

    digest = hashlib.sha256(raw).hexdigest()
    return KnowledgeBase(tuple(triples), digest, report)


def build_index(kb: KnowledgeBase) -> ConceptIndex:
    """Single-pass inverted index over ``kb``."""
    if not kb.triples:
        raise EmptyKb("cannot index an empty knowledge base")
    postings: dict[str, list[int]] = {}
    for ordinal, t in enumerate(kb.triples):
        postings.setdefault(t.subject, []).append(ordinal)
        if t.object != t.subject:
            postings.setdefault(t.object, []).append(ordinal)
    return ConceptIndex(postings, kb)


def triples_with_concept(index: ConceptIndex, concept: str) -> list[Triple]:
    """All triples with ``concept`` as subject or object, in ordinal order."""
    kb = index.kb_ref
    return [kb.triples[o] for o in index.postings.get(concept, [])]


def contains(kb: KnowledgeBase, triple: Triple) -> bool:
    """Exact (subject, relation, object) membership; weight is ignored."""
    return triple.key() in kb._keys


def save_index(index: ConceptIndex, path: str | Path) -> None:
    """Cache the index; the KB's source digest is embedded for validation."""
    payload = {
        "source_digest": index.kb_ref.source_digest,
        "postings": index.postings,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_index(path: str | Path, kb: KnowledgeBase) -> ConceptIndex:
    """Load a cached index for ``kb``; reject caches built from other files."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UnreadableFile(str(path)) from exc
    if payload.get("source_digest") != kb.source_digest:
        raise CacheMismatch(f"index cache {path} was built from a different KB")
    return ConceptIndex(payload["postings"], kb)
