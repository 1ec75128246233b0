"""Acceptance suite: one test per criterion, at the stated tolerances.

Criteria at full scale (57k/4.5/1.4 hard and 71k/4.6/2.8 soft from the
source datasets plus the complete KB) need external inputs and are
documented in the README instead; expected deviation there is +/-10%
because KB membership stands in for the POS filter.
"""

from __future__ import annotations

import json
import random
import shutil
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from dialign.builder import (
    BuildConfig,
    build_instances,
    corrupt_knowledge,
    instance_records,
    read_dialogues,
    split_kg_rg,
    write_corpus,
)
from dialign.cli import main
from dialign.embedstore import HashEmbeddingProvider
from dialign.kb import RELATIONS, KnowledgeBase, Triple, build_index, load_kb
from dialign.matcher import Dialogue, hard_match, soft_match
from dialign.render import (
    RESPONSE_PROMPT,
    default_table,
    format_sequence,
    parse_statement,
    render,
)
from dialign.textproc import Utterance
from oracles import (
    alignment_as_dict,
    brute_force_hard_match,
    brute_force_soft_match,
    keyword_free_concepts,
    make_vocab,
    random_dialogue,
    random_kb,
)

FIXTURES = Path(__file__).parent / "fixtures"


def test_criterion_1_hard_match_oracle_equivalence():
    """>= 1000 randomized dialogues vs brute-force oracle, exact, < 60 s."""
    rng = random.Random(20240401)
    start = time.perf_counter()
    n_dialogues = 0
    for batch in range(20):
        vocab = make_vocab(rng, 40)
        kb = random_kb(rng, vocab, rng.randint(50, 500))
        index = build_index(kb)
        for i in range(50):
            d = random_dialogue(rng, vocab, f"b{batch}-d{i}")
            got = alignment_as_dict(hard_match(d, index))
            want = brute_force_hard_match(d, kb, index)
            assert got == want, f"disagreement on {d.dialogue_id}"
            n_dialogues += 1
    elapsed = time.perf_counter() - start
    assert n_dialogues == 1000
    assert elapsed < 60.0, f"oracle-equivalence run took {elapsed:.1f}s"


def test_criterion_2_soft_match_oracle_equivalence():
    """>= 1000 randomized gaps vs cosine ranking oracle, top-3 + 0.4."""
    rng = random.Random(20240402)
    emb = HashEmbeddingProvider(dim=16)
    n_gaps = 0
    for batch in range(10):
        vocab = make_vocab(rng, 30)
        kb = random_kb(rng, vocab, rng.randint(30, 300))
        index = build_index(kb)
        for i in range(35):
            d = random_dialogue(rng, vocab, f"b{batch}-d{i}")
            got = alignment_as_dict(soft_match(d, index, emb, k=3, threshold=0.4))
            want = brute_force_soft_match(d, kb, index, emb, k=3, threshold=0.4)
            assert got == want, f"disagreement on {d.dialogue_id}"
            n_gaps += d.n_gaps
    assert n_gaps >= 1000

    # forced ties: a constant embedder scores every candidate 1.0, so
    # selection must fall back to triple ordinals
    class Constant:
        dim = 4

        def embed(self, text):
            return np.ones(4)

    vocab = make_vocab(rng, 6)
    kb = random_kb(rng, vocab, 60)
    index = build_index(kb)
    for i in range(20):
        d = random_dialogue(rng, vocab, f"tie-{i}")
        got = alignment_as_dict(soft_match(d, index, Constant(), k=3, threshold=0.4))
        want = brute_force_soft_match(d, kb, index, Constant(), k=3, threshold=0.4)
        assert got == want
        for rows in got.values():
            ordinals = [kb.triples.index(t) for t, _ in rows]
            assert ordinals == sorted(ordinals)


def test_criterion_3_template_roundtrip_all_relations():
    """44 relations x 200 keyword-free concept pairs x 3 formats."""
    rng = random.Random(20240403)
    table = default_table()
    words = keyword_free_concepts(rng, table, 500)
    failures = 0
    for relation in RELATIONS:
        for _ in range(200):
            t = Triple(rng.choice(words), relation, rng.choice(words))
            for fmt in ("raw", "nl", "qa"):
                if parse_statement(render(t, fmt, table), fmt, table) != t:
                    failures += 1
    assert failures == 0


def test_criterion_4_fig1_golden_string():
    """The pipeline reproduces the documented example byte-for-byte."""
    kb = load_kb(FIXTURES / "fixture_kb.tsv")
    index = build_index(kb)
    dialogue = Dialogue(
        "fig1",
        [
            Utterance("I need to buy some flowers for my wife.", 1),
            Utterance("Perhaps you'd be interested in red roses.", 2),
        ],
    )
    table = default_table().with_nl_override("IsA", "is a type of")
    cfg = BuildConfig(format="nl", style="symbol", table=table)
    instances = build_instances(hard_match(dialogue, index), cfg)
    assert len(instances) == 1
    inst = instances[0]
    text = format_sequence(inst.history, inst.target_knowledge, inst.response, inst.style)
    assert text == (
        "<speaker1> I need to buy some flowers for my wife. "
        "<implicit> rose is a type of flower </implicit> "
        "<speaker2> Perhaps you'd be interested in red roses."
    )
    kg, rg = split_kg_rg(inst, cfg)
    assert rg.input_text + rg.target_text == text


def test_criterion_5_kg_rg_concatenation_property():
    """rg.input == kg.input + kg.target + speaker separator, 1000x."""
    rng = random.Random(20240405)
    vocab = make_vocab(rng, 30)
    kb = random_kb(rng, vocab, 250)
    index = build_index(kb)
    checked = 0
    trial = 0
    while checked < 1000:
        d = random_dialogue(rng, vocab, f"d{trial}")
        trial += 1
        cfg = BuildConfig(
            format=rng.choice(["raw", "nl", "qa"]),
            style=rng.choice(["symbol", "prompt"]),
            include_empty=rng.random() < 0.5,
        )
        for inst in build_instances(hard_match(d, index), cfg):
            kg, rg = split_kg_rg(inst, cfg)
            if inst.style == "symbol":
                sep = f" <speaker{inst.response.speaker}> "
            else:
                sep = f" {RESPONSE_PROMPT} <speaker{inst.response.speaker}> "
            assert rg.input_text == kg.input_text + kg.target_text + sep
            assert rg.target_text == inst.response.text
            checked += 1
    assert checked >= 1000


def test_criterion_6_corruption_ablation(tmp_path):
    """Zero dialogue-level fixed points, multiset preserved, seed-stable."""
    rng = random.Random(20240406)
    vocab = make_vocab(rng, 30)
    kb = random_kb(rng, vocab, 300)
    index = build_index(kb)
    instances = []
    di = 0
    while len(instances) < 100 or di < 10:
        d = random_dialogue(rng, vocab, f"d{di:03d}", n_turns=rng.randint(4, 8))
        di += 1
        instances.extend(build_instances(hard_match(d, index), BuildConfig(include_empty=True)))
    n_dialogues = len({i.dialogue_id for i in instances})
    assert len(instances) >= 100 and n_dialogues >= 10

    def payload(inst):
        return json.dumps([s.text for s in inst.target_knowledge] + list(inst.target_scores))

    origin = {}
    for inst in instances:
        origin.setdefault(payload(inst), inst.dialogue_id)
    # make payload -> origin unambiguous for the fixed-point check
    seen = Counter(payload(i) for i in instances)
    unambiguous = {p for p, c in seen.items() if c == 1 and p != "[]"}

    out = corrupt_knowledge(instances, seed=99)
    assert Counter(payload(i) for i in out) == seen
    for before, after in zip(instances, out):
        assert before.dialogue_id == after.dialogue_id
        p = payload(after)
        if p in unambiguous:
            assert origin[p] != after.dialogue_id

    # index-level fixed-point check regardless of payload collisions
    from dialign.builder import deranged_sources

    src = deranged_sources([i.dialogue_id for i in instances], seed=99)
    assert all(instances[s].dialogue_id != instances[i].dialogue_id for i, s in enumerate(src))

    # byte-identical across two runs with the same seed
    def dump(insts, path):
        records = []
        for inst in insts:
            records.extend(instance_records(inst))
        write_corpus(records, path)
        return Path(path).read_bytes()

    b1 = dump(corrupt_knowledge(instances, seed=123), tmp_path / "c1.jsonl")
    b2 = dump(corrupt_knowledge(instances, seed=123), tmp_path / "c2.jsonl")
    assert b1 == b2


def test_criterion_7_fixture_stats_golden(tmp_path):
    """cmd_stats on the 20-dialogue fixture equals the hand tally."""
    shutil.copy(FIXTURES / "fixture_kb.tsv", tmp_path / "kb.tsv")
    shutil.copy(FIXTURES / "fixture_dialogues.jsonl", tmp_path / "dialogues.jsonl")
    cfg = json.loads((FIXTURES / "fixture_config.json").read_text())
    cfg["kb"] = str(tmp_path / "kb.tsv")
    cfg["dialogues"] = [str(tmp_path / "dialogues.jsonl")]
    cfg["out"] = str(tmp_path / "corpus.jsonl")
    cfg["manifest_out"] = str(tmp_path / "manifest.txt")
    (tmp_path / "config.json").write_text(json.dumps(cfg))
    assert main(["build", "--config", str(tmp_path / "config.json")]) == 0
    assert main(
        [
            "stats",
            "--corpus", str(tmp_path / "corpus.jsonl"),
            "--dialogues", str(tmp_path / "dialogues.jsonl"),
            "--json", str(tmp_path / "stats.json"),
        ]
    ) == 0
    got = json.loads((tmp_path / "stats.json").read_text())

    # expectations derived from the committed hand tally
    rows = []
    for ln in (FIXTURES / "fixture_tally.csv").read_text().splitlines():
        if ln.startswith("#") or ln.startswith("dialogue_id") or not ln.strip():
            continue
        d, source, n_turns, instances, observed, know = ln.split(",")
        rows.append((d, source, int(n_turns), int(instances), int(observed), int(know)))
    n_instances = sum(r[3] for r in rows)
    contributing = [r for r in rows if r[3] > 0]
    avg_turns = sum(r[4] for r in contributing) / len(contributing)
    avg_knowledge = sum(r[5] for r in rows) / n_instances

    assert got["total"]["n_instances"] == n_instances == 29
    assert got["total"]["n_dialogues"] == len(contributing) == 19
    assert round(got["total"]["avg_turns"], 3) == round(avg_turns, 3) == 2.737
    assert round(got["total"]["avg_knowledge"], 3) == round(avg_knowledge, 3) == 1.345
    for source in ("alpha", "beta", "gamma", "delta"):
        bucket = [r for r in rows if r[1] == source]
        assert got["per_dataset"][source]["n_instances"] == sum(r[3] for r in bucket)

    # and the committed golden report stays in sync
    want = json.loads((FIXTURES / "golden_stats.json").read_text())
    assert got == want


def test_criterion_8_matching_scales_linearly():
    """Runtime vs corpus size over 1k/2k/4k dialogues stays within 15%
    of the linear extrapolation, with one shared read-only index."""
    rng = random.Random(20240408)
    vocab = make_vocab(rng, 60)
    kb = random_kb(rng, vocab, 400)
    index = build_index(kb)
    dialogues = [random_dialogue(rng, vocab, f"d{i}", n_turns=4) for i in range(4000)]

    def run(n: int) -> float:
        t0 = time.perf_counter()
        for d in dialogues[:n]:
            hard_match(d, index)
        return time.perf_counter() - t0

    run(4000)  # warm-up over the full set
    # interleave sizes and keep the best of 5 so a transient load
    # spike cannot bias one size systematically
    best = {1000: float("inf"), 2000: float("inf"), 4000: float("inf")}
    for _ in range(5):
        for n in best:
            best[n] = min(best[n], run(n))
    t1, t2, t4 = best[1000], best[2000], best[4000]
    predicted = t1 + 3 * (t2 - t1)  # linear extrapolation to 4k
    deviation = abs(t4 - predicted) / predicted
    assert deviation < 0.15, f"t1={t1:.3f} t2={t2:.3f} t4={t4:.3f} deviation={deviation:.2%}"
