"""Command-line pipeline: build, stats, corrupt, manifest, parse-knowledge.

A declarative JSON config drives the pipeline; common fields can be
overridden by flags. Exit codes: 0 success, 2 config error, 3 missing
embeddings (a manifest is written for the exporter), 4 data error.

Config schema (JSON object)::

    {
      "kb": "kb.tsv",                  # triple KB (TSV or assertion dump)
      "dialogues": ["dialogues.jsonl"],
      "matcher": {
        "method": "hard",              # hard | soft
        "k": 3,
        "threshold": 0.4,
        "stopwords": null,             # path; null = packaged list
        "lemma_exceptions": null       # path; null = packaged table
      },
      "format": "nl",                  # raw | nl | qa
      "style": "symbol",               # symbol | prompt
      "include_empty": false,
      "isa_type_of": false,            # render IsA as "is a type of"
      "embeddings": null,              # TBSE file, required for soft
      "out": "corpus.jsonl",
      "manifest_out": "manifest.txt",
      "seed": 0,
      "workers": 1
    }

Every output record carries a digest of the semantic configuration
(file contents, not paths), so reruns are byte-reproducible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import multiprocessing
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import builder, kb as kb_mod, matcher as matcher_mod, render as render_mod, stats as stats_mod
from .builder import BuildConfig, BuilderError, SchemaViolation
from .embedstore import (
    EmbeddingUnavailable,
    FileEmbeddingProvider,
    StoreFormatError,
    load_store,
    write_manifest,
)
from .kb import KbError, UnreadableFile
from .render import FORMATS, STYLES, RenderError, TemplateTable
from .textproc import content_digest, load_lemma_exceptions, load_stopwords

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_EMBEDDINGS = 3
EXIT_DATA = 4

METHODS = ("hard", "soft")


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    kb: str = ""
    dialogues: list[str] = field(default_factory=list)
    method: str = "hard"
    k: int = matcher_mod.DEFAULT_TOP_K
    threshold: float = matcher_mod.DEFAULT_THRESHOLD
    stopwords: str | None = None
    lemma_exceptions: str | None = None
    format: str = "nl"
    style: str = "symbol"
    include_empty: bool = False
    isa_type_of: bool = False
    embeddings: str | None = None
    out: str = "corpus.jsonl"
    manifest_out: str = "manifest.txt"
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.style not in STYLES:
            raise ConfigError(f"style must be one of {STYLES}, got {self.style!r}")
        if self.method not in METHODS:
            raise ConfigError(f"matcher.method must be one of {METHODS}, got {self.method!r}")
        if not isinstance(self.k, int) or isinstance(self.k, bool) or self.k < 1:
            raise ConfigError("matcher.k must be an integer >= 1")
        if not isinstance(self.threshold, (int, float)) or not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("matcher.threshold must be in [0, 1]")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        if not isinstance(self.workers, int) or isinstance(self.workers, bool) or self.workers < 1:
            raise ConfigError("workers must be an integer >= 1")
        if not isinstance(self.include_empty, bool) or not isinstance(self.isa_type_of, bool):
            raise ConfigError("include_empty and isa_type_of must be booleans")
        if not isinstance(self.dialogues, list) or not all(isinstance(p, str) for p in self.dialogues):
            raise ConfigError("dialogues must be a list of paths")


def load_config(path: str | Path) -> PipelineConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    cfg = PipelineConfig()
    matcher_block = obj.pop("matcher", {})
    if not isinstance(matcher_block, dict):
        raise ConfigError("matcher block must be an object")
    for src, names in ((obj, None), (matcher_block, ("method", "k", "threshold", "stopwords", "lemma_exceptions"))):
        for name, value in src.items():
            if names is not None and name not in names:
                raise ConfigError(f"unknown matcher key {name!r}")
            if not hasattr(cfg, name):
                raise ConfigError(f"unknown config key {name!r}")
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    for name in (
        "kb",
        "method",
        "format",
        "style",
        "embeddings",
        "out",
        "manifest_out",
        "seed",
        "workers",
        "stopwords",
        "lemma_exceptions",
    ):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "dialogues", None):
        cfg.dialogues = list(args.dialogues)
    if getattr(args, "include_empty", None) is not None:
        cfg.include_empty = args.include_empty
    if getattr(args, "isa_type_of", None) is not None:
        cfg.isa_type_of = args.isa_type_of
    cfg.validate()


@dataclass
class Runtime:
    """Loaded resources for one pipeline run."""

    cfg: PipelineConfig
    kb: kb_mod.KnowledgeBase
    index: kb_mod.ConceptIndex
    stopwords: frozenset[str]
    exceptions: dict[str, str]
    table: TemplateTable
    digest: str


def _require_paths(cfg: PipelineConfig, need_dialogues: bool = True) -> None:
    if not cfg.kb:
        raise ConfigError("kb path is required")
    if not Path(cfg.kb).exists():
        raise ConfigError(f"kb file does not exist: {cfg.kb}")
    if need_dialogues:
        if not cfg.dialogues:
            raise ConfigError("at least one dialogues file is required")
        for p in cfg.dialogues:
            if not Path(p).exists():
                raise ConfigError(f"dialogues file does not exist: {p}")
    for name in ("stopwords", "lemma_exceptions"):
        p = getattr(cfg, name)
        if p is not None and not Path(p).exists():
            raise ConfigError(f"{name} file does not exist: {p}")


def pipeline_digest(cfg: PipelineConfig, kb: kb_mod.KnowledgeBase, stopwords: frozenset[str], exceptions: dict[str, str], table: TemplateTable) -> str:
    """Digest of the semantic configuration; paths are replaced by
    content digests so identical inputs hash identically anywhere."""
    payload = {
        "method": cfg.method,
        "k": cfg.k,
        "threshold": cfg.threshold,
        "format": cfg.format,
        "style": cfg.style,
        "include_empty": cfg.include_empty,
        "isa_type_of": cfg.isa_type_of,
        "seed": cfg.seed,
        "kb_digest": kb.source_digest,
        "stopwords_digest": content_digest(stopwords),
        "lemma_exceptions_digest": content_digest(f"{s}\t{l}" for s, l in exceptions.items()),
        "templates_digest": content_digest(
            f"{r.relation}\t{table.nl_phrase(r.relation)}\t{r.qa_question}\t{r.qa_answer}"
            for r in table.rows.values()
        ),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def make_runtime(cfg: PipelineConfig, need_dialogues: bool = True) -> Runtime:
    _require_paths(cfg, need_dialogues)
    knowledge = kb_mod.load_kb(cfg.kb)
    if not knowledge.triples:
        raise ConfigError(f"kb {cfg.kb} contains no usable triples")
    index = kb_mod.build_index(knowledge)
    stopwords = load_stopwords(cfg.stopwords)
    exceptions = dict(load_lemma_exceptions(cfg.lemma_exceptions))
    table = render_mod.default_table()
    if cfg.isa_type_of:
        table = table.with_nl_override("IsA", render_mod.NL_ALIASES["IsA"][0])
    digest = pipeline_digest(cfg, knowledge, stopwords, exceptions, table)
    return Runtime(cfg, knowledge, index, stopwords, exceptions, table, digest)


def load_all_dialogues(cfg: PipelineConfig) -> list[matcher_mod.Dialogue]:
    dialogues = []
    for path in cfg.dialogues:
        dialogues.extend(builder.read_dialogues(path))
    return dialogues


def manifest_texts(rt: Runtime, dialogues: list[matcher_mod.Dialogue]) -> list[str]:
    """Every text soft-matching will embed: each gap query followed by
    its candidate triples' NL renderings, deduplicated in first-seen
    order."""
    seen: dict[str, None] = {}
    kb = rt.index.kb_ref
    from .textproc import extract_concepts

    for d in dialogues:
        for gap in range(1, len(d.turns)):
            seen.setdefault(matcher_mod.gap_query(d, gap))
            concepts = extract_concepts(d.turns[gap - 1], rt.index, rt.stopwords, rt.exceptions)
            ordinals: set[int] = set()
            for c in concepts.concepts:
                ordinals.update(rt.index.postings.get(c, ()))
            for o in sorted(ordinals):
                seen.setdefault(render_mod.render_nl(kb.triples[o], rt.table))
    return list(seen)


# worker state for multiprocess matching; initialized once per worker
_WORKER: dict = {}


def _init_worker(rt_index, rt_stopwords, rt_exceptions, rt_table, method, k, threshold, provider) -> None:
    _WORKER.update(
        index=rt_index,
        stopwords=rt_stopwords,
        exceptions=rt_exceptions,
        table=rt_table,
        method=method,
        k=k,
        threshold=threshold,
        provider=provider,
    )


def _match_one(dialogue: matcher_mod.Dialogue) -> matcher_mod.AlignedDialogue:
    w = _WORKER
    if w["method"] == "hard":
        return matcher_mod.hard_match(dialogue, w["index"], w["stopwords"], w["exceptions"])
    return matcher_mod.soft_match(
        dialogue,
        w["index"],
        w["provider"],
        w["k"],
        w["threshold"],
        w["stopwords"],
        w["exceptions"],
        w["table"],
    )


def match_dialogues(rt: Runtime, dialogues: list[matcher_mod.Dialogue], provider=None) -> list[matcher_mod.AlignedDialogue]:
    """Match every dialogue, output ordered by input order."""
    args = (rt.index, rt.stopwords, rt.exceptions, rt.table, rt.cfg.method, rt.cfg.k, rt.cfg.threshold, provider)
    if rt.cfg.workers > 1:
        with multiprocessing.Pool(rt.cfg.workers, _init_worker, args) as pool:
            return list(pool.imap(_match_one, dialogues, chunksize=16))
    _init_worker(*args)
    return [_match_one(d) for d in dialogues]


def cmd_build(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    rt = make_runtime(cfg)
    dialogues = load_all_dialogues(cfg)

    provider = None
    if cfg.method == "soft":
        texts = manifest_texts(rt, dialogues)
        store = None
        if cfg.embeddings and Path(cfg.embeddings).exists():
            store = load_store(cfg.embeddings)
        missing = [t for t in texts if store is None or t not in store]
        if missing:
            n = write_manifest(texts, cfg.manifest_out)
            print(
                f"error: {len(missing)} of {n} required texts have no embedding; "
                f"wrote manifest to {cfg.manifest_out}.\n"
                f"Run the exporter (embed-export --manifest {cfg.manifest_out} "
                f"--out <embeddings.bin>) and pass --embeddings.",
                file=sys.stderr,
            )
            return EXIT_MISSING_EMBEDDINGS
        provider = FileEmbeddingProvider(store)

    aligned = match_dialogues(rt, dialogues, provider)
    build_cfg = BuildConfig(
        format=cfg.format,
        style=cfg.style,
        include_empty=cfg.include_empty,
        table=rt.table,
        config_digest=rt.digest,
    )
    instances = []
    for ad in aligned:
        instances.extend(builder.build_instances(ad, build_cfg))
    records = []
    for inst in instances:
        kg, rg = builder.instance_records(inst, build_cfg)
        records.append(kg)
        records.append(rg)
    builder.write_corpus(records, cfg.out)

    report = stats_mod.corpus_stats(instances)
    kept = rt.kb.load_report
    print(f"kb: {len(rt.kb)} triples kept, drops: {kept.as_dict()}")
    print(f"corpus: {len(records)} records ({len(instances)} instances) -> {cfg.out}")
    print(report.format_table())
    if args.stats_json:
        Path(args.stats_json).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True), encoding="utf-8")
    return EXIT_OK


def _instance_views(records: list[builder.CorpusRecord], source_of: dict[str, str] | None) -> list[stats_mod.InstanceView]:
    views: dict[tuple[str, int], stats_mod.InstanceView] = {}
    for rec in records:
        key = (rec.dialogue_id, rec.response_turn)
        if key not in views:
            source = source_of.get(rec.dialogue_id, "") if source_of else ""
            views[key] = stats_mod.InstanceView(rec.dialogue_id, rec.response_turn, len(rec.knowledge), source)
    return list(views.values())


def cmd_stats(args: argparse.Namespace) -> int:
    records = builder.read_corpus(args.corpus)
    source_of = None
    if args.dialogues:
        source_of = {}
        for path in args.dialogues:
            for d in builder.read_dialogues(path):
                source_of[d.dialogue_id] = d.source_dataset
    report = stats_mod.corpus_stats(_instance_views(records, source_of))
    print(report.format_table())
    if args.json:
        Path(args.json).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True), encoding="utf-8")
    return EXIT_OK


def cmd_corrupt(args: argparse.Namespace) -> int:
    records = builder.read_corpus(args.corpus)
    pairs: dict[tuple[str, int], dict[str, builder.CorpusRecord]] = {}
    order: list[tuple[str, int]] = []
    for rec in records:
        key = (rec.dialogue_id, rec.response_turn)
        if key not in pairs:
            pairs[key] = {}
            order.append(key)
        if rec.task in pairs[key]:
            raise SchemaViolation(0, "task", f"duplicate {rec.task} record for {key}")
        pairs[key][rec.task] = rec
    for key in order:
        if set(pairs[key]) != {"kg", "rg"}:
            raise SchemaViolation(0, "task", f"instance {key} is missing its kg/rg pair")
        kg, rg = pairs[key]["kg"], pairs[key]["rg"]
        if not rg.input_text.startswith(kg.input_text + kg.target_text):
            raise SchemaViolation(0, "input_text", f"instance {key} violates the concatenation property")

    src = builder.deranged_sources([key[0] for key in order], args.seed)
    out_records = []
    for i, key in enumerate(order):
        kg, rg = pairs[key]["kg"], pairs[key]["rg"]
        donor = pairs[order[src[i]]]["kg"]
        sep = rg.input_text[len(kg.input_text) + len(kg.target_text) :]
        new_kg = builder.CorpusRecord(
            kg.dialogue_id, kg.response_turn, "kg", kg.input_text, donor.target_text,
            kg.format, kg.style, [dict(item) for item in donor.knowledge], kg.config_digest,
        )
        new_rg = builder.CorpusRecord(
            rg.dialogue_id, rg.response_turn, "rg",
            kg.input_text + donor.target_text + sep, rg.target_text,
            rg.format, rg.style, [dict(item) for item in donor.knowledge], rg.config_digest,
        )
        out_records.extend((new_kg, new_rg))
    builder.write_corpus(out_records, args.out)
    print(f"corrupted corpus ({len(order)} instances) -> {args.out}")
    return EXIT_OK


def cmd_manifest(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    rt = make_runtime(cfg)
    dialogues = load_all_dialogues(cfg)
    n = write_manifest(manifest_texts(rt, dialogues), cfg.manifest_out)
    print(f"manifest: {n} texts -> {cfg.manifest_out}")
    return EXIT_OK


def cmd_parse_knowledge(args: argparse.Namespace) -> int:
    knowledge = kb_mod.load_kb(args.kb)
    statements = [
        ln for ln in Path(args.statements).read_text(encoding="utf-8").split("\n") if ln.strip()
    ]
    report = stats_mod.novelty_report(statements, args.format, knowledge)
    print(report.format_table())
    if args.json:
        Path(args.json).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True), encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dialign", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_overrides(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--kb")
        p.add_argument("--dialogues", nargs="*")
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--style", choices=STYLES)
        p.add_argument("--include-empty", dest="include_empty", action="store_true", default=None)
        p.add_argument("--isa-type-of", dest="isa_type_of", action="store_true", default=None)
        p.add_argument("--embeddings")
        p.add_argument("--out")
        p.add_argument("--manifest-out", dest="manifest_out")
        p.add_argument("--stopwords")
        p.add_argument("--lemma-exceptions", dest="lemma_exceptions")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)

    p_build = sub.add_parser("build", help="run ingest -> match -> render -> split -> write")
    add_config_overrides(p_build)
    p_build.add_argument("--stats-json", dest="stats_json", help="also write the stats report as JSON")
    p_build.set_defaults(func=cmd_build)

    p_stats = sub.add_parser("stats", help="corpus statistics report")
    p_stats.add_argument("--corpus", required=True)
    p_stats.add_argument("--dialogues", nargs="*", help="dialogue files for the per-dataset breakdown")
    p_stats.add_argument("--json", help="write the report as JSON")
    p_stats.set_defaults(func=cmd_stats)

    p_corrupt = sub.add_parser("corrupt", help="noisy-knowledge ablation over a corpus file")
    p_corrupt.add_argument("--corpus", required=True)
    p_corrupt.add_argument("--out", required=True)
    p_corrupt.add_argument("--seed", type=int, default=0)
    p_corrupt.set_defaults(func=cmd_corrupt)

    p_manifest = sub.add_parser("manifest", help="write the embedding manifest for the exporter")
    add_config_overrides(p_manifest)
    p_manifest.set_defaults(func=cmd_manifest)

    p_novel = sub.add_parser("parse-knowledge", help="novelty report for a file of statements")
    p_novel.add_argument("--kb", required=True)
    p_novel.add_argument("--statements", required=True, help="one statement per line")
    p_novel.add_argument("--format", choices=FORMATS, default="nl")
    p_novel.add_argument("--json", help="write the report as JSON")
    p_novel.set_defaults(func=cmd_parse_knowledge)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KbError, BuilderError, RenderError, StoreFormatError, EmbeddingUnavailable) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
