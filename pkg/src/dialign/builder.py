"""Knowledge-fused training instances and the corpus format.

Each instance pairs a fused history (turns with matched knowledge
statements interleaved after the turn they ground), the target
knowledge for the final gap, and the response turn. Instances split
into a knowledge-generation (KG) example and a response-generation
(RG) example whose texts satisfy, exactly:

    rg.input_text == kg.input_text + kg.target_text + <speaker separator>

Corpus records are JSONL with the fields dialogue_id, response_turn,
task ("kg"/"rg"), input_text, target_text, format, style, knowledge
(list of {s, r, o, score}), config_digest. KG and RG records are
interleaved in that order per instance.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .kb import Triple
from .matcher import AlignedDialogue, Dialogue, GapAlignment
from .render import (
    FORMATS,
    KNOWLEDGE_CLOSE,
    KNOWLEDGE_OPEN,
    KNOWLEDGE_PROMPT,
    RESPONSE_PROMPT,
    STATEMENT_SEPARATOR,
    STYLES,
    KnowledgeStatement,
    TemplateTable,
    default_table,
    format_sequence,
    speaker_token,
    statement,
)
from .textproc import Utterance

EMPTY_KNOWLEDGE_SENTINEL = "<noknowledge>"


class BuilderError(Exception):
    pass


class TooFewDialogues(BuilderError):
    pass


class SchemaViolation(BuilderError):
    def __init__(self, line_no: int, fieldname: str, reason: str = ""):
        msg = f"line {line_no}: field {fieldname!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)
        self.line_no = line_no
        self.field = fieldname


@dataclass
class BuildConfig:
    format: str = "nl"
    style: str = "symbol"
    include_empty: bool = False
    sentinel: str = EMPTY_KNOWLEDGE_SENTINEL
    separator: str = STATEMENT_SEPARATOR
    table: TemplateTable | None = None
    config_digest: str = ""

    def __post_init__(self) -> None:
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}, got {self.style!r}")

    def resolved_table(self) -> TemplateTable:
        return self.table or default_table()


@dataclass
class TrainingInstance:
    """One (fused history, target knowledge, response) record."""

    dialogue_id: str
    response_turn: int
    history: list[tuple[Utterance, list[KnowledgeStatement]]]
    target_knowledge: list[KnowledgeStatement]
    target_scores: list[float]
    response: Utterance
    format: str
    style: str
    source_dataset: str = ""
    config_digest: str = ""

    @property
    def knowledge_count(self) -> int:
        return len(self.target_knowledge)


@dataclass(frozen=True)
class KgExample:
    input_text: str
    target_text: str


@dataclass(frozen=True)
class RgExample:
    input_text: str
    target_text: str


def _gap_statements(alignment: GapAlignment | None, cfg: BuildConfig) -> list[KnowledgeStatement]:
    if alignment is None:
        return []
    table = cfg.resolved_table()
    return [statement(t, cfg.format, table) for t in alignment.triples]


def build_instances(ad: AlignedDialogue, cfg: BuildConfig | None = None) -> list[TrainingInstance]:
    """One instance per response turn t in [2, n].

    By default only turns whose final gap (t-1) has a nonempty
    alignment are emitted; ``include_empty`` restores the rest with an
    empty target. History turn j carries the gap-j statements for
    j < t-1; the gap-(t-1) statements are the target, not history.
    """
    cfg = cfg or BuildConfig()
    d = ad.dialogue
    by_gap = {a.gap_index: a for a in ad.alignments}
    rendered = {g: _gap_statements(a, cfg) for g, a in by_gap.items()}
    instances = []
    for t in range(2, len(d.turns) + 1):
        target = by_gap.get(t - 1)
        if target is None and not cfg.include_empty:
            continue
        history = []
        for j in range(1, t):
            stmts = rendered.get(j, []) if j < t - 1 else []
            history.append((d.turns[j - 1], list(stmts)))
        instances.append(
            TrainingInstance(
                dialogue_id=d.dialogue_id,
                response_turn=t,
                history=history,
                target_knowledge=list(rendered.get(t - 1, [])),
                target_scores=list(target.scores) if target else [],
                response=d.turns[t - 1],
                format=cfg.format,
                style=cfg.style,
                source_dataset=d.source_dataset,
                config_digest=cfg.config_digest or ad.config_digest,
            )
        )
    return instances


def knowledge_opener(style: str) -> str:
    return KNOWLEDGE_OPEN if style == "symbol" else KNOWLEDGE_PROMPT


def response_separator(style: str, speaker: int) -> str:
    if style == "symbol":
        return f" {speaker_token(speaker)} "
    return f" {RESPONSE_PROMPT} {speaker_token(speaker)} "


def split_kg_rg(instance: TrainingInstance, cfg: BuildConfig | None = None) -> tuple[KgExample, RgExample]:
    """Split an instance into its KG and RG (input, target) pairs."""
    cfg = cfg or BuildConfig(format=instance.format, style=instance.style)
    style = instance.style
    history_text = format_sequence(instance.history, [], None, style, cfg.separator)
    kg_input = f"{history_text} {knowledge_opener(style)} "
    if instance.target_knowledge:
        joined = cfg.separator.join(s.text for s in instance.target_knowledge)
        kg_target = f"{joined} {KNOWLEDGE_CLOSE}" if style == "symbol" else joined
    else:
        kg_target = cfg.sentinel
    sep = response_separator(style, instance.response.speaker)
    rg_input = kg_input + kg_target + sep
    return KgExample(kg_input, kg_target), RgExample(rg_input, instance.response.text)


_DERANGEMENT_INFEASIBLE = (
    "dialogue-level derangement impossible: dialogue {!r} holds {} of {} payloads"
)


def deranged_sources(group_ids: list[str], seed: int) -> list[int]:
    """For each position, a source position from a different group.

    The assignment is a permutation (payload multiset preserved) with
    no same-group mapping, deterministic in ``seed``.
    """
    n = len(group_ids)
    groups: dict[str, list[int]] = {}
    for i, g in enumerate(group_ids):
        groups.setdefault(g, []).append(i)
    if len(groups) < 2:
        raise TooFewDialogues("need at least 2 distinct dialogues to corrupt knowledge")
    cmax = max(len(v) for v in groups.values())
    if cmax > n - cmax:
        big = max(groups, key=lambda g: len(groups[g]))
        raise TooFewDialogues(_DERANGEMENT_INFEASIBLE.format(big, cmax, n))
    rng = random.Random(seed)
    blocks = list(groups.values())
    for block in blocks:
        rng.shuffle(block)
    rng.shuffle(blocks)
    seq = [i for block in blocks for i in block]
    # shifting by the largest group size can never land inside the
    # same group's contiguous block
    src = [0] * n
    for p, pos in enumerate(seq):
        src[pos] = seq[(p + cmax) % n]
    return src


def corrupt_knowledge(instances: list[TrainingInstance], seed: int) -> list[TrainingInstance]:
    """Noisy-knowledge ablation: permute target knowledge across
    instances so none keeps knowledge from its own dialogue."""
    src = deranged_sources([inst.dialogue_id for inst in instances], seed)
    out = []
    for i, inst in enumerate(instances):
        donor = instances[src[i]]
        out.append(
            TrainingInstance(
                dialogue_id=inst.dialogue_id,
                response_turn=inst.response_turn,
                history=inst.history,
                target_knowledge=list(donor.target_knowledge),
                target_scores=list(donor.target_scores),
                response=inst.response,
                format=inst.format,
                style=inst.style,
                source_dataset=inst.source_dataset,
                config_digest=inst.config_digest,
            )
        )
    return out


# ---------------------------------------------------------------------------
# corpus records


@dataclass
class CorpusRecord:
    dialogue_id: str
    response_turn: int
    task: str  # "kg" | "rg"
    input_text: str
    target_text: str
    format: str
    style: str
    knowledge: list[dict]
    config_digest: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "dialogue_id": self.dialogue_id,
                "response_turn": self.response_turn,
                "task": self.task,
                "input_text": self.input_text,
                "target_text": self.target_text,
                "format": self.format,
                "style": self.style,
                "knowledge": self.knowledge,
                "config_digest": self.config_digest,
            },
            ensure_ascii=False,
        )


_RECORD_FIELDS: dict[str, type] = {
    "dialogue_id": str,
    "response_turn": int,
    "task": str,
    "input_text": str,
    "target_text": str,
    "format": str,
    "style": str,
    "knowledge": list,
    "config_digest": str,
}
_KNOWLEDGE_FIELDS: dict[str, type] = {"s": str, "r": str, "o": str, "score": (int, float)}


def knowledge_payload(instance: TrainingInstance) -> list[dict]:
    return [
        {"s": s.triple.subject, "r": s.triple.relation, "o": s.triple.object, "score": score}
        for s, score in zip(instance.target_knowledge, instance.target_scores)
    ]


def instance_records(instance: TrainingInstance, cfg: BuildConfig | None = None) -> tuple[CorpusRecord, CorpusRecord]:
    kg, rg = split_kg_rg(instance, cfg)
    payload = knowledge_payload(instance)
    common = dict(
        dialogue_id=instance.dialogue_id,
        response_turn=instance.response_turn,
        format=instance.format,
        style=instance.style,
        knowledge=payload,
        config_digest=instance.config_digest,
    )
    return (
        CorpusRecord(task="kg", input_text=kg.input_text, target_text=kg.target_text, **common),
        CorpusRecord(task="rg", input_text=rg.input_text, target_text=rg.target_text, **common),
    )


def write_corpus(records: list[CorpusRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def _validate_record(obj: dict, line_no: int) -> CorpusRecord:
    if not isinstance(obj, dict):
        raise SchemaViolation(line_no, "<record>", "not a JSON object")
    for name in obj:
        if name not in _RECORD_FIELDS:
            raise SchemaViolation(line_no, name, "unknown field")
    for name, typ in _RECORD_FIELDS.items():
        if name not in obj:
            raise SchemaViolation(line_no, name, "missing")
        if not isinstance(obj[name], typ) or (typ is int and isinstance(obj[name], bool)):
            raise SchemaViolation(line_no, name, f"expected {typ.__name__}")
    if obj["task"] not in ("kg", "rg"):
        raise SchemaViolation(line_no, "task", f"got {obj['task']!r}")
    if obj["format"] not in FORMATS:
        raise SchemaViolation(line_no, "format", f"got {obj['format']!r}")
    if obj["style"] not in STYLES:
        raise SchemaViolation(line_no, "style", f"got {obj['style']!r}")
    if obj["response_turn"] < 2:
        raise SchemaViolation(line_no, "response_turn", "must be >= 2")
    for item in obj["knowledge"]:
        if not isinstance(item, dict):
            raise SchemaViolation(line_no, "knowledge", "item is not an object")
        for kname, ktyp in _KNOWLEDGE_FIELDS.items():
            if kname not in item or not isinstance(item[kname], ktyp):
                raise SchemaViolation(line_no, f"knowledge.{kname}", "missing or wrong type")
    return CorpusRecord(**obj)


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    """Read and validate a corpus file; empty files are empty corpora."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(line_no, "<json>", str(exc)) from None
            records.append(_validate_record(obj, line_no))
    return records


# ---------------------------------------------------------------------------
# dialogue input


def read_dialogues(path: str | Path) -> list[Dialogue]:
    """Read dialogue JSONL: {"dialogue_id", "source", "turns", "pos_tags"?}.

    Turn text is whitespace-normalized (runs collapse to single spaces)
    so every downstream format stays line-safe. Speakers alternate
    1,2,1,2,... by position.
    """
    dialogues = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(line_no, "<json>", str(exc)) from None
            for name, typ in (("dialogue_id", str), ("source", str), ("turns", list)):
                if name not in obj or not isinstance(obj[name], typ):
                    raise SchemaViolation(line_no, name, "missing or wrong type")
            turns_raw = obj["turns"]
            if len(turns_raw) < 2:
                raise SchemaViolation(line_no, "turns", "need at least 2 turns")
            tags = obj.get("pos_tags")
            if tags is not None and (not isinstance(tags, list) or len(tags) != len(turns_raw)):
                raise SchemaViolation(line_no, "pos_tags", "must parallel turns")
            turns = []
            for i, raw in enumerate(turns_raw):
                if not isinstance(raw, str):
                    raise SchemaViolation(line_no, "turns", f"turn {i} is not a string")
                text = " ".join(raw.split())
                if not text:
                    raise SchemaViolation(line_no, "turns", f"turn {i} empty after trim")
                turn_tags = tuple(tags[i]) if tags is not None else None
                turns.append(Utterance(text, i % 2 + 1, turn_tags))
            dialogues.append(Dialogue(obj["dialogue_id"], turns, obj["source"]))
    return dialogues
