"""Corpus statistics and knowledge novelty reports.

``avg_turns`` is a dialogue-level average: for each unique dialogue
contributing instances, its observed length is the largest response
turn among its instances, and the report averages those lengths. The
averaging rule is recorded in the report metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol

from .kb import KnowledgeBase, contains
from .render import TemplateTable, Unparseable, parse_statement


class InstanceLike(Protocol):
    dialogue_id: str
    response_turn: int
    knowledge_count: int
    source_dataset: str


@dataclass
class InstanceView:
    """Instance-level view reconstructed from corpus records."""

    dialogue_id: str
    response_turn: int
    knowledge_count: int
    source_dataset: str = ""


@dataclass
class StatsBucket:
    n_instances: int = 0
    n_dialogues: int = 0
    avg_turns: float | None = None
    avg_knowledge: float | None = None

    def as_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "n_dialogues": self.n_dialogues,
            "avg_turns": None if self.avg_turns is None else round(self.avg_turns, 6),
            "avg_knowledge": None if self.avg_knowledge is None else round(self.avg_knowledge, 6),
        }


@dataclass
class StatsReport:
    total: StatsBucket
    per_dataset: dict[str, StatsBucket] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "total": self.total.as_dict(),
            "per_dataset": {k: v.as_dict() for k, v in sorted(self.per_dataset.items())},
            "metadata": dict(self.metadata),
        }

    def format_table(self) -> str:
        header = f"{'dataset':<16}{'instances':>10}{'dialogues':>10}{'avg turns':>11}{'avg knowledge':>15}"
        lines = [header, "-" * len(header)]

        def fmt(name: str, b: StatsBucket) -> str:
            turns = "-" if b.avg_turns is None else f"{b.avg_turns:.3f}"
            know = "-" if b.avg_knowledge is None else f"{b.avg_knowledge:.3f}"
            return f"{name:<16}{b.n_instances:>10}{b.n_dialogues:>10}{turns:>11}{know:>15}"

        for name, bucket in sorted(self.per_dataset.items()):
            lines.append(fmt(name, bucket))
        lines.append(fmt("TOTAL", self.total))
        return "\n".join(lines)


def _bucket(items: list[InstanceLike]) -> StatsBucket:
    b = StatsBucket(n_instances=len(items))
    if not items:
        return b
    observed_len: dict[str, int] = {}
    for it in items:
        cur = observed_len.get(it.dialogue_id, 0)
        observed_len[it.dialogue_id] = max(cur, it.response_turn)
    b.n_dialogues = len(observed_len)
    b.avg_turns = sum(observed_len.values()) / len(observed_len)
    b.avg_knowledge = sum(it.knowledge_count for it in items) / len(items)
    return b


def corpus_stats(instances: Iterable[InstanceLike]) -> StatsReport:
    """Instance count, dialogue-level average turns, and average
    knowledge statements per instance, with a per-dataset breakdown."""
    items = list(instances)
    by_source: dict[str, list[InstanceLike]] = {}
    for it in items:
        by_source.setdefault(it.source_dataset or "all", []).append(it)
    return StatsReport(
        total=_bucket(items),
        per_dataset={src: _bucket(group) for src, group in by_source.items()},
        metadata={
            "avg_turns": "mean over unique dialogues of max(response_turn) among their instances",
            "avg_knowledge": "mean number of target knowledge statements per instance",
        },
    )


@dataclass
class NoveltyReport:
    n_statements: int
    n_parsed: int
    n_novel: int
    n_unparseable: int

    @property
    def novel_fraction(self) -> float | None:
        return None if self.n_parsed == 0 else self.n_novel / self.n_parsed

    def as_dict(self) -> dict:
        frac = self.novel_fraction
        return {
            "n_statements": self.n_statements,
            "n_parsed": self.n_parsed,
            "n_novel": self.n_novel,
            "n_unparseable": self.n_unparseable,
            "novel_fraction": None if frac is None else round(frac, 6),
        }

    def format_table(self) -> str:
        frac = self.novel_fraction
        return "\n".join(
            [
                f"statements:     {self.n_statements}",
                f"parsed:         {self.n_parsed}",
                f"novel:          {self.n_novel}",
                f"unparseable:    {self.n_unparseable}",
                f"novel fraction: {'-' if frac is None else f'{frac:.3f}'}",
            ]
        )


def novelty_report(
    statements: Iterable[str],
    fmt: str,
    kb: KnowledgeBase,
    table: TemplateTable | None = None,
) -> NoveltyReport:
    """Classify statements as in-KB, novel, or unparseable.

    Novelty is exact-match only: a parsed triple counts as novel iff
    its (subject, relation, object) is absent from the KB.
    """
    n_statements = n_parsed = n_novel = n_unparseable = 0
    for text in statements:
        n_statements += 1
        try:
            triple = parse_statement(text, fmt, table)
        except Unparseable:
            n_unparseable += 1
            continue
        n_parsed += 1
        if not contains(kb, triple):
            n_novel += 1
    return NoveltyReport(n_statements, n_parsed, n_novel, n_unparseable)
