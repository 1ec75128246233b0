import json
import random

import pytest

from dialign.kb import (
    CacheMismatch,
    EmptyKb,
    KbFilter,
    KnowledgeBase,
    MalformedRow,
    Triple,
    UnreadableFile,
    build_index,
    contains,
    load_index,
    load_kb,
    save_index,
    triples_with_concept,
)
from oracles import make_vocab, random_kb


def write_tsv(tmp_path, rows, name="kb.tsv"):
    path = tmp_path / name
    path.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    return path


def test_load_fixture_tsv(tmp_path):
    path = write_tsv(tmp_path, ["IsA\trose\tflower\t1.0"])
    kb = load_kb(path)
    assert kb.triples == (Triple("rose", "IsA", "flower", 1.0),)
    assert kb.load_report.kept == 1


def test_load_without_weight_defaults_to_one(tmp_path):
    kb = load_kb(write_tsv(tmp_path, ["IsA\trose\tflower"]))
    assert kb.triples[0].weight == 1.0


def test_multi_word_concept_dropped(tmp_path):
    kb = load_kb(write_tsv(tmp_path, ["IsA\tred_rose\tflower\t1.0", "IsA\trose\tflower"]))
    assert len(kb) == 1
    assert kb.load_report.dropped_multi_word == 1


def test_duplicate_rows_deduped(tmp_path):
    kb = load_kb(write_tsv(tmp_path, ["IsA\trose\tflower", "IsA\trose\tflower"]))
    assert len(kb) == 1
    assert kb.load_report.dropped_duplicate == 1


def test_unknown_relation_dropped(tmp_path):
    kb = load_kb(write_tsv(tmp_path, ["MadeUpRel\trose\tflower"]))
    assert len(kb) == 0
    assert kb.load_report.dropped_unknown_relation == 1


def test_concepts_lowercased(tmp_path):
    kb = load_kb(write_tsv(tmp_path, ["IsA\tRose\tFLOWER"]))
    assert kb.triples[0] == Triple("rose", "IsA", "flower")


def test_malformed_weight_skipped_lenient_raises_strict(tmp_path):
    path = write_tsv(tmp_path, ["IsA\trose\tflower\tnotanumber"])
    kb = load_kb(path)
    assert kb.load_report.dropped_malformed == 1
    with pytest.raises(MalformedRow):
        load_kb(path, KbFilter(strict=True))


def test_unreadable_file(tmp_path):
    with pytest.raises(UnreadableFile):
        load_kb(tmp_path / "missing.tsv")


def test_assertion_dump_rows(tmp_path):
    rows = [
        "/a/x\t/r/IsA\t/c/en/rose\t/c/en/flower\t" + json.dumps({"weight": 2.5}),
        "/a/x\t/r/IsA\t/c/en/red_rose\t/c/en/flower\t{}",  # underscore: multi-word
        "/a/x\t/r/IsA\t/c/en/rose/n\t/c/en/flower\t{}",  # sense-tagged: not a plain word
        "/a/x\t/r/IsA\t/c/fr/rose\t/c/en/flower\t{}",  # non-English
        "/a/x\t/r/NoSuchRel\t/c/en/rose\t/c/en/flower\t{}",
        "/a/x\t/r/dbpedia/capital\t/c/en/france\t/c/en/paris\t{}",
    ]
    kb = load_kb(write_tsv(tmp_path, rows))
    assert [t.key() for t in kb.triples] == [
        ("rose", "IsA", "flower"),
        ("france", "dbpediacapital", "paris"),
    ]
    assert kb.triples[0].weight == 2.5
    rep = kb.load_report
    assert rep.dropped_non_english == 1
    assert rep.dropped_unknown_relation == 1
    assert rep.dropped_multi_word == 2


def test_load_idempotence(tmp_path):
    path = write_tsv(tmp_path, ["IsA\trose\tflower", "SymbolOf\trose\tlove"])
    kb1, kb2 = load_kb(path), load_kb(path)
    assert kb1.triples == kb2.triples
    assert kb1.source_digest == kb2.source_digest
    c1, c2 = tmp_path / "i1.json", tmp_path / "i2.json"
    save_index(build_index(kb1), c1)
    save_index(build_index(kb2), c2)
    assert c1.read_bytes() == c2.read_bytes()


def test_filter_monotonicity(tmp_path):
    path = write_tsv(tmp_path, ["IsA\trose\tflower", "SymbolOf\trose\tlove", "Causes\train\tflood"])
    narrow = load_kb(path, KbFilter(allowed_relations=frozenset({"IsA"})))
    wide = load_kb(path)
    assert set(narrow.triples) <= set(wide.triples)


def test_build_index_postings(tiny_kb):
    idx = build_index(tiny_kb)
    assert idx.postings["rose"] == [0, 1]
    assert idx.postings["flower"] == [0]
    assert "piano" in idx


def test_build_index_empty_kb():
    with pytest.raises(EmptyKb):
        build_index(KnowledgeBase((), "empty"))


def test_self_loop_triple_posted_once():
    kb = KnowledgeBase((Triple("echo", "RelatedTo", "echo"),), "x")
    idx = build_index(kb)
    assert idx.postings["echo"] == [0]


def test_triples_with_concept(tiny_index, tiny_kb):
    assert triples_with_concept(tiny_index, "rose") == list(tiny_kb.triples[:2])
    assert triples_with_concept(tiny_index, "flower") == [tiny_kb.triples[0]]
    assert triples_with_concept(tiny_index, "unknown") == []


def test_contains_direction_and_relation(tiny_kb):
    assert contains(tiny_kb, Triple("rose", "IsA", "flower"))
    assert not contains(tiny_kb, Triple("flower", "IsA", "rose"))
    assert not contains(tiny_kb, Triple("rose", "RelatedTo", "flower"))


def test_index_equals_brute_force_scan():
    rng = random.Random(7)
    for trial in range(20):
        vocab = make_vocab(rng, 30)
        kb = random_kb(rng, vocab, rng.randint(1, 120))
        idx = build_index(kb)
        concepts = {t.subject for t in kb.triples} | {t.object for t in kb.triples}
        for c in concepts:
            expected = [t for t in kb.triples if c in (t.subject, t.object)]
            assert triples_with_concept(idx, c) == expected
        for c in concepts:
            posting = idx.postings[c]
            assert posting == sorted(set(posting))


def test_index_cache_roundtrip_and_mismatch(tmp_path, tiny_kb):
    idx = build_index(tiny_kb)
    cache = tmp_path / "index.json"
    save_index(idx, cache)
    loaded = load_index(cache, tiny_kb)
    assert loaded.postings == idx.postings
    other = KnowledgeBase((Triple("cat", "IsA", "pet"),), "other-digest")
    with pytest.raises(CacheMismatch):
        load_index(cache, other)
