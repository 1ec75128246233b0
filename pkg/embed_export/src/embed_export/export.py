"""Encode every manifest line with a sentence-transformer and write
the binary embedding file the matcher pipeline consumes.

The manifest is UTF-8, one exact text per line; duplicate lines
collapse to a single record. Output record order follows the deduped
manifest order regardless of batch size.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .writer import write_embedding_file

DEFAULT_MODEL = "all-MiniLM-L6-v2"
DEFAULT_BATCH = 64


class ExportError(Exception):
    pass


class ModelLoadError(ExportError):
    pass


@dataclass
class ExportJob:
    manifest: str | Path
    out: str | Path
    model: str = DEFAULT_MODEL
    batch_size: int = DEFAULT_BATCH


class SentenceTransformerEncoder:
    """Thin adapter around sentence-transformers, inference mode."""

    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer

            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise ModelLoadError(f"cannot load encoder {model_name!r}: {exc}") from exc
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str], batch_size: int) -> np.ndarray:
        vecs = self._model.encode(
            texts,
            batch_size=batch_size,
            convert_to_numpy=True,
            show_progress_bar=False,
        )
        return np.asarray(vecs, dtype=np.float64)


def read_manifest_lines(path: str | Path) -> list[str]:
    """Unique manifest lines in first-seen order (exact-string dedupe)."""
    seen: dict[str, None] = {}
    for ln in Path(path).read_text(encoding="utf-8").split("\n"):
        if ln != "":
            seen.setdefault(ln)
    return list(seen)


def export(job: ExportJob, encoder=None) -> dict[str, np.ndarray]:
    """Run the export; returns the encoder-held (pre-truncation)
    vectors keyed by text, mainly so callers can verify round-trips."""
    if job.batch_size < 1:
        raise ExportError("batch size must be >= 1")
    texts = read_manifest_lines(job.manifest)
    if encoder is None:
        encoder = SentenceTransformerEncoder(job.model)
    held: dict[str, np.ndarray] = {}
    for start in range(0, len(texts), job.batch_size):
        batch = texts[start : start + job.batch_size]
        vecs = np.asarray(encoder.encode(batch, job.batch_size), dtype=np.float64)
        if vecs.shape != (len(batch), encoder.dim):
            raise ExportError(f"encoder returned shape {vecs.shape}, want ({len(batch)}, {encoder.dim})")
        for text, vec in zip(batch, vecs):
            held[text] = vec
    write_embedding_file(job.out, ((t, held[t]) for t in texts), encoder.dim)
    return held


def cosine(u, v) -> float:
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
