"""Binary embedding file writer.

Layout (little-endian): magic ``TBSE`` | u16 format version = 1 |
u32 dim | u64 count | per record: u32 key length, key UTF-8 bytes,
dim float32 components. The float64 -> float32 truncation happens
here and nowhere else.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"TBSE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_KEYLEN = struct.Struct("<I")


def write_embedding_file(path: str | Path, items: Iterable[tuple[str, Sequence[float]]], dim: int) -> int:
    """Write (key, vector) records; returns the record count."""
    rows = list(items)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dim, len(rows)))
        for key, vec in rows:
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (dim,):
                raise ValueError(f"vector for {key!r} has shape {arr.shape}, want ({dim},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite vector for {key!r}")
            data = key.encode("utf-8")
            fh.write(_KEYLEN.pack(len(data)))
            fh.write(data)
            fh.write(arr.tobytes())
    return len(rows)


def read_embedding_file(path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    """Minimal self-check reader; returns (dim, entries)."""
    raw = Path(path).read_bytes()
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise ValueError(f"{path}: not a supported embedding file")
    entries: dict[str, np.ndarray] = {}
    off = _HEADER.size
    for _ in range(count):
        (key_len,) = _KEYLEN.unpack_from(raw, off)
        off += _KEYLEN.size
        key = raw[off : off + key_len].decode("utf-8")
        off += key_len
        entries[key] = np.frombuffer(raw[off : off + dim * 4], dtype="<f4").copy()
        off += dim * 4
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes")
    return dim, entries
