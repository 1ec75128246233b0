"""Weak knowledge labels for dialogue turn gaps.

Hard-matching is distant supervision: a triple is aligned to the gap
between turns i and i+1 when one of its concepts appears in turn i and
the other in turn i+1 (a triple never uses the same turn for both
concepts). Soft-matching anchors candidates on turn i, embeds their NL
renderings and the concatenated turn pair, and keeps the top-k by
cosine, thresholded.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping

from . import render as render_mod
from .embedstore import cosine
from .kb import ConceptIndex, Triple
from .render import TemplateTable
from .textproc import (
    Utterance,
    default_lemma_exceptions,
    default_stopwords,
    extract_concepts,
)

DEFAULT_TOP_K = 3
DEFAULT_THRESHOLD = 0.4


@dataclass
class Dialogue:
    """Ordered turns with alternating speakers 1,2,1,2,..."""

    dialogue_id: str
    turns: list[Utterance]
    source_dataset: str = ""

    def __post_init__(self) -> None:
        if len(self.turns) < 2:
            raise ValueError(f"{self.dialogue_id}: dialogue needs at least 2 turns")
        for i, utt in enumerate(self.turns):
            if utt.speaker != i % 2 + 1:
                raise ValueError(f"{self.dialogue_id}: speakers must alternate 1,2,1,2,...")

    @property
    def n_gaps(self) -> int:
        return len(self.turns) - 1


@dataclass(frozen=True)
class GapAlignment:
    """Triples aligned to the gap between turns ``gap_index`` and
    ``gap_index``+1 (1-based). Scores parallel the triples: 1.0 for
    hard matches, cosine similarity for soft."""

    gap_index: int
    triples: tuple[Triple, ...]
    scores: tuple[float, ...]
    method: str


@dataclass
class AlignedDialogue:
    dialogue: Dialogue
    alignments: list[GapAlignment] = field(default_factory=list)
    config_digest: str = ""

    def alignment_at(self, gap_index: int) -> GapAlignment | None:
        for a in self.alignments:
            if a.gap_index == gap_index:
                return a
        return None


def matcher_config_digest(
    method: str,
    stopwords: frozenset[str],
    exceptions: Mapping[str, str],
    k: int | None = None,
    threshold: float | None = None,
) -> str:
    from .textproc import content_digest

    payload = {
        "method": method,
        "stopwords": content_digest(stopwords),
        "lemma_exceptions": content_digest(f"{s}\t{l}" for s, l in exceptions.items()),
    }
    if method == "soft":
        payload["k"] = k
        payload["threshold"] = threshold
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def hard_match(
    dialogue: Dialogue,
    index: ConceptIndex,
    stopwords: frozenset[str] | None = None,
    exceptions: Mapping[str, str] | None = None,
) -> AlignedDialogue:
    """Exact-lemma alignment for every gap of ``dialogue``.

    All matches are kept (no cap), deduplicated by (s, r, o), and
    ordered by (first matching concept's token index in turn i, triple
    ordinal). Gaps without matches get no alignment entry.
    """
    stopwords = default_stopwords() if stopwords is None else stopwords
    exceptions = default_lemma_exceptions() if exceptions is None else exceptions
    kb = index.kb_ref
    concept_sets = [extract_concepts(t, index, stopwords, exceptions) for t in dialogue.turns]
    alignments = []
    for gap in range(1, len(dialogue.turns)):
        left, right = concept_sets[gap - 1], concept_sets[gap]
        anchor: dict[int, int] = {}  # triple ordinal -> earliest anchor token index
        for concept in left.concepts:
            first = left.first_index(concept)
            for ordinal in index.postings.get(concept, ()):
                t = kb.triples[ordinal]
                hit = (t.subject == concept and t.object in right.concepts) or (
                    t.object == concept and t.subject in right.concepts
                )
                if hit and first < anchor.get(ordinal, 1 << 60):
                    anchor[ordinal] = first
        if anchor:
            ordered = sorted(anchor, key=lambda o: (anchor[o], o))
            alignments.append(
                GapAlignment(
                    gap,
                    tuple(kb.triples[o] for o in ordered),
                    (1.0,) * len(ordered),
                    "hard",
                )
            )
    digest = matcher_config_digest("hard", stopwords, exceptions)
    return AlignedDialogue(dialogue, alignments, digest)


def gap_query(dialogue: Dialogue, gap_index: int) -> str:
    """Embedding query for a gap: turn i and turn i+1 joined by a space."""
    return dialogue.turns[gap_index - 1].text + " " + dialogue.turns[gap_index].text


def soft_match(
    dialogue: Dialogue,
    index: ConceptIndex,
    embedder,
    k: int = DEFAULT_TOP_K,
    threshold: float = DEFAULT_THRESHOLD,
    stopwords: frozenset[str] | None = None,
    exceptions: Mapping[str, str] | None = None,
    table: TemplateTable | None = None,
) -> AlignedDialogue:
    """Embedding-similarity alignment.

    Candidates for gap i are all triples with a concept in turn i;
    each candidate's NL rendering is scored against the turn-pair
    query by cosine. Top-k selection happens before thresholding;
    ties break toward the lower triple ordinal.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    stopwords = default_stopwords() if stopwords is None else stopwords
    exceptions = default_lemma_exceptions() if exceptions is None else exceptions
    table = table or render_mod.default_table()
    kb = index.kb_ref
    concept_sets = [extract_concepts(t, index, stopwords, exceptions) for t in dialogue.turns]
    alignments = []
    for gap in range(1, len(dialogue.turns)):
        anchors = concept_sets[gap - 1].concepts
        candidates: set[int] = set()
        for concept in anchors:
            candidates.update(index.postings.get(concept, ()))
        if not candidates:
            continue
        query_vec = embedder.embed(gap_query(dialogue, gap))
        scored = []
        for ordinal in sorted(candidates):
            text = render_mod.render_nl(kb.triples[ordinal], table)
            scored.append((cosine(query_vec, embedder.embed(text)), ordinal))
        scored.sort(key=lambda sc: (-sc[0], sc[1]))
        kept = [(s, o) for s, o in scored[:k] if s >= threshold]
        if kept:
            alignments.append(
                GapAlignment(
                    gap,
                    tuple(kb.triples[o] for _, o in kept),
                    tuple(s for s, _ in kept),
                    "soft",
                )
            )
    digest = matcher_config_digest("soft", stopwords, exceptions, k, threshold)
    return AlignedDialogue(dialogue, alignments, digest)
