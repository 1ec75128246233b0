"""Text embeddings for soft-matching.

File layout (little-endian throughout): magic ``TBSE`` | u16 format
version = 1 | u32 dim | u64 count | ``count`` records of u32 key
length, key UTF-8 bytes, dim float32 components. Vectors are float32
on disk; cosine accumulates in float64.

Two providers are available: a file-backed store (strict on misses)
and a deterministic hash embedder for tests and oracles.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MAGIC = b"TBSE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_KEYLEN = struct.Struct("<I")
_HASH_SALT = b"hash-embed-v1"


class StoreFormatError(Exception):
    """Base class for embedding-file format errors."""


class BadMagic(StoreFormatError):
    pass


class DimMismatch(StoreFormatError):
    pass


class TruncatedFile(StoreFormatError):
    pass


class EmbeddingUnavailable(KeyError):
    """A provider has no vector for the requested text."""

    def __init__(self, text: str):
        super().__init__(text)
        self.text = text


class ZeroVector(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass
class EmbeddingStore:
    """Immutable text -> vector map; all vectors share one dimension."""

    dim: int
    entries: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, text: str) -> bool:
        return text in self.entries


def write_store(path: str | Path, entries: Mapping[str, Sequence[float]] | Iterable[tuple[str, Sequence[float]]], dim: int) -> None:
    """Write the binary embedding file; float32 truncation happens here."""
    items = list(entries.items()) if isinstance(entries, Mapping) else list(entries)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dim, len(items)))
        for key, vec in items:
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (dim,):
                raise DimMismatch(f"vector for {key!r} has shape {arr.shape}, want ({dim},)")
            if not np.all(np.isfinite(arr)):
                raise StoreFormatError(f"non-finite vector for {key!r}")
            data = key.encode("utf-8")
            fh.write(_KEYLEN.pack(len(data)))
            fh.write(data)
            fh.write(arr.tobytes())


def load_store(path: str | Path, expected_dim: int | None = None) -> EmbeddingStore:
    """Load and validate an embedding file."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header needs {_HEADER.size}")
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{path}: unsupported format version {version}")
    if expected_dim is not None and dim != expected_dim:
        raise DimMismatch(f"{path}: file dim {dim}, expected {expected_dim}")
    vec_bytes = dim * 4
    entries: dict[str, np.ndarray] = {}
    off = _HEADER.size
    for _ in range(count):
        if off + _KEYLEN.size > len(raw):
            raise TruncatedFile(f"{path}: truncated at record key length")
        (key_len,) = _KEYLEN.unpack_from(raw, off)
        off += _KEYLEN.size
        if off + key_len + vec_bytes > len(raw):
            raise TruncatedFile(f"{path}: truncated record payload")
        key = raw[off : off + key_len].decode("utf-8")
        off += key_len
        vec = np.frombuffer(raw[off : off + vec_bytes], dtype="<f4").copy()
        off += vec_bytes
        if not np.all(np.isfinite(vec)):
            raise StoreFormatError(f"{path}: non-finite vector for {key!r}")
        entries[key] = vec
    if off != len(raw):
        raise StoreFormatError(f"{path}: {len(raw) - off} trailing bytes")
    return EmbeddingStore(dim, entries)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """dot(u, v) / (|u| * |v|), accumulated in float64."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape or a.size < 1:
        raise LengthMismatch(f"shapes {a.shape} vs {b.shape}")
    na = float(np.dot(a, a))
    nb = float(np.dot(b, b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for all-zero vector")
    val = float(np.dot(a, b)) / (na**0.5 * nb**0.5)
    return max(-1.0, min(1.0, val))


def _token_vector(token: str, dim: int) -> np.ndarray:
    out = np.empty(dim, dtype=np.float64)
    data = token.encode("utf-8")
    i = 0
    block = 0
    while i < dim:
        digest = hashlib.sha256(
            _HASH_SALT + b"\x00" + data + b"\x00" + block.to_bytes(4, "little")
        ).digest()
        for j in range(0, 32, 4):
            if i >= dim:
                break
            u32 = int.from_bytes(digest[j : j + 4], "little")
            out[i] = u32 / 2**31 - 1.0  # [0, 2^32) -> [-1, 1)
            i += 1
        block += 1
    return out


def test_embed(text: str, dim: int) -> np.ndarray:
    """Deterministic unit vector from the text's token multiset.

    Stable across runs and platforms (pure integer hashing); token
    order does not matter.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    tokens = text.split() or [""]
    acc = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        acc += _token_vector(tok, dim)
    norm = float(np.linalg.norm(acc))
    if norm < 1e-12:
        acc = _token_vector("\x00degenerate", dim)
        norm = float(np.linalg.norm(acc))
    return acc / norm


class HashEmbeddingProvider:
    """Deterministic synthetic provider (tests, oracles)."""

    def __init__(self, dim: int = 16):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        return test_embed(text, self.dim)


class FileEmbeddingProvider:
    """Store-backed provider; unknown text is a hard error by design
    (the CLI pre-computes every needed text into a manifest)."""

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self.dim = store.dim

    def embed(self, text: str) -> np.ndarray:
        try:
            return self.store.entries[text]
        except KeyError:
            raise EmbeddingUnavailable(text) from None


def write_manifest(texts: Iterable[str], path: str | Path) -> int:
    """One exact text per line, UTF-8; returns the line count."""
    lines = list(texts)
    for t in lines:
        if "\n" in t or "\r" in t:
            raise ValueError(f"manifest text contains a newline: {t!r}")
    Path(path).write_text("".join(t + "\n" for t in lines), encoding="utf-8")
    return len(lines)


def read_manifest(path: str | Path) -> list[str]:
    return [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln != ""]
