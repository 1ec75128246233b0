"""Utterance -> candidate concept lemmas.

A token becomes a concept candidate iff its lemma exists in the KB
index and neither surface nor lemma is a stopword. KB membership
stands in for a part-of-speech filter; callers that have upstream
POS tags can attach them to the utterance (values NOUN/VERB/ADJ/OTHER,
parallel to :func:`tokenize` output) and only NOUN/VERB/ADJ tokens are
then considered.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Container, Iterable, Mapping

CONTENT_TAGS = ("NOUN", "VERB", "ADJ")

_VOWELS = "aeiouy"


@dataclass(frozen=True)
class Utterance:
    """One dialogue turn. ``speaker`` is a 1-based ordinal."""

    text: str
    speaker: int
    pos_tags: tuple[str, ...] | None = None


@dataclass
class ConceptSet:
    """Concept lemmas of a turn plus where they came from.

    ``provenance`` maps each concept to ``(token index, surface form)``
    pairs in token order; indices refer to the whitespace-token position
    in the original text.
    """

    concepts: frozenset[str]
    provenance: dict[str, list[tuple[int, str]]]

    def first_index(self, concept: str) -> int:
        return self.provenance[concept][0][0]


def _read_word_file(path: str | Path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Stopword file: one lowercase word per line, ``#`` comments allowed."""
    if path is None:
        return default_stopwords()
    return frozenset(w.lower() for w in _read_word_file(path))


def load_lemma_exceptions(path: str | Path | None = None) -> dict[str, str]:
    """Exception file: ``surface\\tlemma`` per line."""
    if path is None:
        return dict(default_lemma_exceptions())
    table = {}
    for ln in _read_word_file(path):
        surface, _, lemma = ln.partition("\t")
        if lemma:
            table[surface.lower()] = lemma.lower()
    return table


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    with resources.files("dialign.data").joinpath("stopwords.txt").open("r", encoding="utf-8") as fh:
        return frozenset(
            ln.strip().lower() for ln in fh if ln.strip() and not ln.startswith("#")
        )


@lru_cache(maxsize=1)
def default_lemma_exceptions() -> Mapping[str, str]:
    table = {}
    with resources.files("dialign.data").joinpath("lemma_exceptions.tsv").open("r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            surface, _, lemma = ln.partition("\t")
            if lemma:
                table[surface.lower()] = lemma.lower()
    return table


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize_with_indices(text: str) -> list[tuple[int, str]]:
    """Like :func:`tokenize` but keeps each token's original
    whitespace-token index (tokens emptied by stripping shift the rest)."""
    out = []
    for idx, raw in enumerate(text.split()):
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        tok = raw[start:end]
        if tok:
            out.append((idx, tok))
    return out


def tokenize(text: str) -> list[str]:
    """Split on whitespace and strip leading/trailing punctuation.

    Intra-word apostrophes and hyphens survive; emptied tokens are
    dropped.
    """
    return [tok for _, tok in tokenize_with_indices(text)]


def _has_vowel(s: str) -> bool:
    return any(c in _VOWELS for c in s)


def _restore_stem(stem: str, vocab: Container[str] | None) -> str:
    """Undo consonant doubling / restore a silent e after -ing/-ed
    stripping. The vocabulary (KB concepts) arbitrates when given;
    otherwise a doubled final consonant (except l/s/z) is undoubled."""
    if vocab is not None:
        if stem in vocab:
            return stem
        if len(stem) >= 3 and stem[-1] == stem[-2] and stem[:-1] in vocab:
            return stem[:-1]
        if stem + "e" in vocab:
            return stem + "e"
    if (
        len(stem) >= 4
        and stem[-1] == stem[-2]
        and stem[-1] not in _VOWELS
        and stem[-1] not in "lsz"
    ):
        return stem[:-1]
    return stem


def _lemmatize_once(w: str, vocab: Container[str] | None, exceptions: Mapping[str, str]) -> str:
    if w in exceptions:
        return exceptions[w]
    if vocab is not None and w in vocab:
        return w
    if w.endswith("'s"):
        return w[:-2]
    if w.endswith("'"):
        return w[:-1]
    if len(w) > 4 and w.endswith("ies"):
        return w[:-3] + "y"
    if len(w) > 3 and w.endswith("es") and (w[-3] in "sxz" or w[-4:-2] in ("ch", "sh")):
        stem = w[:-2]
        if vocab is not None and stem not in vocab and stem + "e" in vocab:
            return stem + "e"
        return stem
    if len(w) > 3 and w.endswith("s") and not w.endswith("ss"):
        return w[:-1]
    if len(w) > 4 and w.endswith("ing") and _has_vowel(w[:-3]):
        return _restore_stem(w[:-3], vocab)
    if len(w) > 4 and w.endswith("ied"):
        return w[:-3] + "y"
    if len(w) > 4 and w.endswith("ed") and not w.endswith("eed") and _has_vowel(w[:-2]):
        return _restore_stem(w[:-2], vocab)
    return w


def lemmatize(
    token: str,
    vocab: Container[str] | None = None,
    exceptions: Mapping[str, str] | None = None,
) -> str:
    """Rule-based lemma of ``token`` (total, deterministic, idempotent).

    Each pass applies, in order: exception table, vocabulary identity,
    possessive strip, then suffix rules (-ies, -es after sibilants, -s,
    -ing, -ed) with doubling/silent-e repair via ``vocab`` when
    available. Passes repeat until a fixpoint, so a strip that exposes
    another suffix (e.g. housing -> hous) still ends on a stable form.
    """
    exceptions = default_lemma_exceptions() if exceptions is None else exceptions
    w = token.lower()
    for _ in range(10):
        out = _lemmatize_once(w, vocab, exceptions)
        if out == w:
            return out
        w = out
    return w


def extract_concepts(
    utterance: Utterance,
    index,
    stopwords: frozenset[str] | None = None,
    exceptions: Mapping[str, str] | None = None,
) -> ConceptSet:
    """Concept lemmas of ``utterance`` that are known to the KB index.

    Tokens shorter than 2 characters are never candidates; stopwords
    are rejected both before and after lemmatization.
    """
    stopwords = default_stopwords() if stopwords is None else stopwords
    toks = tokenize_with_indices(utterance.text)
    tags = utterance.pos_tags
    if tags is not None and len(tags) != len(toks):
        raise ValueError(
            f"pos_tags length {len(tags)} != token count {len(toks)} for {utterance.text!r}"
        )
    provenance: dict[str, list[tuple[int, str]]] = {}
    for pos, (idx, tok) in enumerate(toks):
        if tags is not None and tags[pos] not in CONTENT_TAGS:
            continue
        if len(tok) < 2:
            continue
        low = tok.lower()
        if low in stopwords:
            continue
        lemma = lemmatize(low, vocab=index, exceptions=exceptions)
        if len(lemma) < 2 or lemma in stopwords:
            continue
        if lemma not in index:
            continue
        provenance.setdefault(lemma, []).append((idx, tok))
    return ConceptSet(frozenset(provenance), provenance)


def content_digest(items: Iterable[str]) -> str:
    """Order-insensitive digest of a word list (config provenance)."""
    import hashlib

    h = hashlib.sha256()
    for w in sorted(items):
        h.update(w.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
