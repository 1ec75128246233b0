"""Triple <-> text conversion and training-sequence assembly.

Three statement formats exist: ``raw`` (``subject Relation object``),
``nl`` (relation mapped to a connecting phrase), and ``qa`` (an
information-seeking question plus its answer). The per-relation
templates ship as a versioned TSV resource with columns
``relation / nl_phrase / qa_question / qa_answer`` and placeholders
``<concept1>`` / ``<concept2>``.

Sequence assembly supports two transition styles between knowledge and
dialogue: ``symbol`` (knowledge enclosed in ``<implicit>``/``</implicit>``)
and ``prompt`` (verbatim natural-language prompts).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .kb import RELATION_SET, Triple
from .textproc import Utterance

KNOWLEDGE_OPEN = "<implicit>"
KNOWLEDGE_CLOSE = "</implicit>"
KNOWLEDGE_PROMPT = "The following background knowledge is helpful for generating the response:"
RESPONSE_PROMPT = (
    "Grounded on the background knowledge, what does the speaker probably say in the next response?"
)
STATEMENT_SEPARATOR = "; "

FORMATS = ("raw", "nl", "qa")
STYLES = ("symbol", "prompt")

# Additional NL phrases the parser accepts per relation. The first
# alias is also what render_nl emits when the relation is overridden
# (e.g. "rose is a type of flower" instead of "rose is a flower").
NL_ALIASES: dict[str, tuple[str, ...]] = {
    "IsA": ("is a type of",),
}


class RenderError(Exception):
    pass


class UnknownRelation(RenderError):
    pass


class Unparseable(RenderError):
    def __init__(self, text: str, fmt: str):
        super().__init__(f"no {fmt} template matches: {text!r}")
        self.text = text
        self.fmt = fmt


@dataclass(frozen=True)
class KnowledgeStatement:
    triple: Triple
    format: str
    text: str


@dataclass(frozen=True)
class TemplateRow:
    relation: str
    nl_phrase: str
    qa_question: str
    qa_answer: str


def speaker_token(ordinal: int) -> str:
    return f"<speaker{ordinal}>"


@dataclass
class TemplateTable:
    """The 44-row relation template table.

    ``nl_overrides`` swaps the emitted NL phrase per relation (the
    parser accepts base phrase, aliases, and overrides alike).
    """

    rows: dict[str, TemplateRow]
    nl_overrides: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        got = set(self.rows)
        if got != RELATION_SET:
            missing = sorted(RELATION_SET - got)
            extra = sorted(got - RELATION_SET)
            raise ValueError(f"template table must cover the relation set exactly; missing={missing} extra={extra}")
        phrases = [r.nl_phrase for r in self.rows.values()]
        if len(set(phrases)) != len(phrases):
            dupes = sorted({p for p in phrases if phrases.count(p) > 1})
            raise ValueError(f"nl phrases must be distinct delimiters, duplicated: {dupes}")
        for row in self.rows.values():
            for tmpl in (row.qa_question, row.qa_answer):
                if "<concept1>" not in tmpl:
                    raise ValueError(f"{row.relation}: QA template missing <concept1>: {tmpl!r}")
            if "<concept2>" not in row.qa_answer:
                raise ValueError(f"{row.relation}: QA answer missing <concept2>: {row.qa_answer!r}")

    @classmethod
    def load(cls, path: str | Path | None = None) -> "TemplateTable":
        if path is None:
            text = resources.files("dialign.data").joinpath("relation_templates.tsv").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        rows = {}
        for ln in text.splitlines():
            if not ln.strip() or ln.startswith("#"):
                continue
            cols = ln.split("\t")
            if len(cols) != 4:
                raise ValueError(f"template row needs 4 columns: {ln!r}")
            rows[cols[0]] = TemplateRow(*cols)
        return cls(rows)

    def with_nl_override(self, relation: str, phrase: str) -> "TemplateTable":
        if relation not in self.rows:
            raise UnknownRelation(relation)
        overrides = dict(self.nl_overrides)
        overrides[relation] = phrase
        return TemplateTable(self.rows, overrides)

    def nl_phrase(self, relation: str) -> str:
        return self.nl_overrides.get(relation, self.rows[relation].nl_phrase)


_DEFAULT_TABLE: TemplateTable | None = None


def default_table() -> TemplateTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = TemplateTable.load()
    return _DEFAULT_TABLE


def _row(table: TemplateTable | None, relation: str) -> tuple[TemplateTable, TemplateRow]:
    table = table or default_table()
    try:
        return table, table.rows[relation]
    except KeyError:
        raise UnknownRelation(relation) from None


def render_raw(triple: Triple, table: TemplateTable | None = None) -> str:
    return f"{triple.subject} {triple.relation} {triple.object}"


def render_nl(triple: Triple, table: TemplateTable | None = None) -> str:
    table, _ = _row(table, triple.relation)
    return f"{triple.subject} {table.nl_phrase(triple.relation)} {triple.object}"


def render_qa(triple: Triple, table: TemplateTable | None = None) -> str:
    _, row = _row(table, triple.relation)
    question = row.qa_question.replace("<concept1>", triple.subject).replace("<concept2>", triple.object)
    answer = row.qa_answer.replace("<concept1>", triple.subject).replace("<concept2>", triple.object)
    return f"{question} {answer}"


def render(triple: Triple, fmt: str, table: TemplateTable | None = None) -> str:
    if fmt == "raw":
        return render_raw(triple, table)
    if fmt == "nl":
        return render_nl(triple, table)
    if fmt == "qa":
        return render_qa(triple, table)
    raise ValueError(f"unknown format {fmt!r}")


def statement(triple: Triple, fmt: str, table: TemplateTable | None = None) -> KnowledgeStatement:
    return KnowledgeStatement(triple, fmt, render(triple, fmt, table))


def _nl_phrase_map(table: TemplateTable) -> list[tuple[tuple[str, ...], str]]:
    """(phrase tokens, relation) pairs, longest phrase first; includes
    aliases and active overrides."""
    pairs: list[tuple[tuple[str, ...], str]] = []
    seen: set[tuple[str, ...]] = set()
    for order, (relation, row) in enumerate(table.rows.items()):
        variants = [row.nl_phrase, *NL_ALIASES.get(relation, ())]
        if relation in table.nl_overrides:
            variants.append(table.nl_overrides[relation])
        for phrase in variants:
            toks = tuple(phrase.split())
            if toks not in seen:
                seen.add(toks)
                pairs.append((toks, relation))
    pairs.sort(key=lambda p: -len(p[0]))
    return pairs


def _parse_nl(text: str, table: TemplateTable) -> Triple:
    tokens = text.split()
    for phrase, relation in _nl_phrase_map(table):
        plen = len(phrase)
        # anchor on the first occurrence, at least one token on each side
        for start in range(1, len(tokens) - plen):
            if tuple(tokens[start : start + plen]) == phrase:
                subject = " ".join(tokens[:start]).lower()
                obj = " ".join(tokens[start + plen :]).lower()
                return Triple(subject, relation, obj)
    raise Unparseable(text, "nl")


def _template_regex(template: str) -> re.Pattern[str]:
    pat = re.escape(template)
    pat = pat.replace(re.escape("<concept1>"), "(?P<c1>.+?)")
    pat = pat.replace(re.escape("<concept2>"), "(?P<c2>.+)")
    return re.compile(pat)


def _qa_question_order(table: TemplateTable) -> list[TemplateRow]:
    # more literal tokens first so e.g. "What is X not made of?" is not
    # swallowed by the "What is X made of?" pattern
    def literal_count(row: TemplateRow) -> int:
        stripped = row.qa_question.replace("<concept1>", " ").replace("<concept2>", " ")
        return len(stripped.split())

    return sorted(table.rows.values(), key=lambda r: -literal_count(r))


def _parse_qa(text: str, table: TemplateTable) -> Triple:
    qmark = text.find("? ")
    if qmark < 0:
        raise Unparseable(text, "qa")
    question, answer = text[: qmark + 1], text[qmark + 2 :]
    for row in _qa_question_order(table):
        m = _template_regex(row.qa_question).fullmatch(question)
        if not m:
            continue
        ma = _template_regex(row.qa_answer).fullmatch(answer)
        if not ma:
            raise Unparseable(text, "qa")
        qc1 = m.group("c1").lower()
        if ma.group("c1").lower() != qc1:
            raise Unparseable(text, "qa")
        return Triple(qc1, row.relation, ma.group("c2").lower())
    raise Unparseable(text, "qa")


def _parse_raw(text: str, table: TemplateTable) -> Triple:
    tokens = text.split()
    for i in range(1, len(tokens) - 1):
        if tokens[i] in table.rows:
            return Triple(" ".join(tokens[:i]).lower(), tokens[i], " ".join(tokens[i + 1 :]).lower())
    raise Unparseable(text, "raw")


def parse_statement(text: str, fmt: str, table: TemplateTable | None = None) -> Triple:
    """Inverse of the corresponding renderer.

    NL and QA matching goes longest-template-first and anchors on the
    first phrase occurrence, so concepts containing template keywords
    can fail to round-trip; such cases raise :class:`Unparseable`
    rather than returning a wrong triple.
    """
    table = table or default_table()
    if fmt == "nl":
        return _parse_nl(text, table)
    if fmt == "qa":
        return _parse_qa(text, table)
    if fmt == "raw":
        return _parse_raw(text, table)
    raise ValueError(f"unknown format {fmt!r}")


def knowledge_block(statements: list[KnowledgeStatement], style: str, separator: str = STATEMENT_SEPARATOR) -> str:
    joined = separator.join(s.text for s in statements)
    if style == "symbol":
        return f"{KNOWLEDGE_OPEN} {joined} {KNOWLEDGE_CLOSE}"
    if style == "prompt":
        return f"{KNOWLEDGE_PROMPT} {joined}"
    raise ValueError(f"unknown style {style!r}")


def format_sequence(
    history_turns: list[tuple[Utterance, list[KnowledgeStatement] | None]],
    target_knowledge: list[KnowledgeStatement],
    response: Utterance | None,
    style: str = "symbol",
    separator: str = STATEMENT_SEPARATOR,
) -> str:
    """Assemble the full training-sequence text.

    Every turn is prefixed with its ``<speakerN>`` token; knowledge
    blocks follow the turn they ground. Empty knowledge emits no block.
    """
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}")
    if not history_turns:
        raise ValueError("history must be nonempty")
    parts: list[str] = []
    for utt, stmts in history_turns:
        parts.append(speaker_token(utt.speaker))
        parts.append(utt.text)
        if stmts:
            parts.append(knowledge_block(list(stmts), style, separator))
    if target_knowledge:
        parts.append(knowledge_block(list(target_knowledge), style, separator))
    if response is not None:
        if style == "prompt":
            parts.append(RESPONSE_PROMPT)
        parts.append(speaker_token(response.speaker))
        parts.append(response.text)
    return " ".join(parts)
