"""Regenerate the committed golden files from the brute-force oracle
pipeline and cross-check them against the hand tally.

    python tests/make_goldens.py

Matching goes through the oracle (full KB scan per gap), not the
indexed matcher, so the goldens are an independent reference for the
production path. Rendering/splitting reuses the builder, whose output
shape is pinned by its own unit tests.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from dialign import builder, kb as kb_mod, stats as stats_mod
from dialign.cli import load_config, make_runtime
from dialign.matcher import AlignedDialogue, GapAlignment, matcher_config_digest
from oracles import brute_force_hard_match

FIXTURES = Path(__file__).parent / "fixtures"
ROOT = Path(__file__).parent.parent


def oracle_aligned(dialogue, kb, index, stopwords, exceptions):
    matches = brute_force_hard_match(dialogue, kb, index, stopwords, exceptions)
    alignments = [
        GapAlignment(gap, tuple(t for t, _ in rows), tuple(s for _, s in rows), "hard")
        for gap, rows in sorted(matches.items())
    ]
    digest = matcher_config_digest("hard", stopwords, exceptions)
    return AlignedDialogue(dialogue, alignments, digest)


def main() -> int:
    cfg = load_config(FIXTURES / "fixture_config.json")
    cfg.kb = str(ROOT / cfg.kb)
    cfg.dialogues = [str(ROOT / p) for p in cfg.dialogues]
    rt = make_runtime(cfg)
    dialogues = builder.read_dialogues(cfg.dialogues[0])

    build_cfg = builder.BuildConfig(
        format=cfg.format,
        style=cfg.style,
        include_empty=cfg.include_empty,
        table=rt.table,
        config_digest=rt.digest,
    )
    instances = []
    per_dialogue: dict[str, list] = {d.dialogue_id: [] for d in dialogues}
    for d in dialogues:
        ad = oracle_aligned(d, rt.kb, rt.index, rt.stopwords, rt.exceptions)
        built = builder.build_instances(ad, build_cfg)
        instances.extend(built)
        per_dialogue[d.dialogue_id] = built

    # cross-check the committed hand tally before freezing anything
    with open(FIXTURES / "fixture_tally.csv", newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(ln for ln in fh if not ln.startswith("#"))]
    assert len(rows) == len(dialogues), "tally rows do not cover the fixture"
    for row in rows:
        built = per_dialogue[row["dialogue_id"]]
        got = {
            "instances": len(built),
            "observed_len": max((i.response_turn for i in built), default=0),
            "knowledge_total": sum(i.knowledge_count for i in built),
        }
        want = {k: int(row[k]) for k in got}
        if got != want:
            raise SystemExit(f"hand tally mismatch for {row['dialogue_id']}: tally={want} oracle={got}")

    records = []
    for inst in instances:
        kg, rg = builder.instance_records(inst, build_cfg)
        records.extend((kg, rg))
    builder.write_corpus(records, FIXTURES / "golden_corpus.jsonl")

    report = stats_mod.corpus_stats(instances)
    (FIXTURES / "golden_stats.json").write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True), encoding="utf-8"
    )
    print(f"golden corpus: {len(records)} records ({len(instances)} instances)")
    print(f"stats: {report.total.as_dict()}")
    print("hand tally: OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
