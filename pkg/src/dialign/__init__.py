"""Weakly align commonsense triples to dialogue turn gaps and emit
paired knowledge-generation / response-generation training corpora."""

from .builder import (
    BuildConfig,
    CorpusRecord,
    KgExample,
    RgExample,
    TrainingInstance,
    build_instances,
    corrupt_knowledge,
    instance_records,
    read_corpus,
    read_dialogues,
    split_kg_rg,
    write_corpus,
)
from .embedstore import (
    EmbeddingStore,
    FileEmbeddingProvider,
    HashEmbeddingProvider,
    cosine,
    load_store,
    test_embed,
    write_store,
)
from .kb import (
    RELATIONS,
    ConceptIndex,
    KbFilter,
    KnowledgeBase,
    Triple,
    build_index,
    contains,
    load_kb,
    triples_with_concept,
)
from .matcher import AlignedDialogue, Dialogue, GapAlignment, hard_match, soft_match
from .render import (
    KnowledgeStatement,
    TemplateTable,
    format_sequence,
    parse_statement,
    render_nl,
    render_qa,
    render_raw,
)
from .stats import NoveltyReport, StatsReport, corpus_stats, novelty_report
from .textproc import ConceptSet, Utterance, extract_concepts, lemmatize, tokenize

__version__ = "0.1.0"
