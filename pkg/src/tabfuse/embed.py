"""Frozen text embeddings: an offline hashing encoder plus TGEM file IO.

TGEM layout (little-endian throughout):

    magic   4 bytes   b"TGEM"
    version u32       1
    n       u64       number of rows
    d       u64       embedding width
    records n times   u64 row_id, then d float32 values

so a well-formed file is exactly 24 + n * (8 + 4 * d) bytes.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"TGEM"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")
DEFAULT_DIM = 128

log = logging.getLogger("tabfuse")


@dataclass(frozen=True)
class EmbeddingStore:
    dim: int
    rows: dict
    provider_tag: str = "hash"

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError(f"embedding dim must be positive, got {self.dim}")
        for rid, vec in self.rows.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"row {rid} has shape {vec.shape}, store dim is {self.dim}")

    def __len__(self) -> int:
        return len(self.rows)

    def lookup(self, row_id: int) -> np.ndarray:
        try:
            return self.rows[int(row_id)]
        except KeyError:
            raise KeyError(f"row_id {row_id} not in embedding store") from None

    def matrix(self, row_ids) -> np.ndarray:
        """Stack embeddings for the given ids, widened to float64."""
        return np.stack([self.lookup(r) for r in row_ids]).astype(np.float64)


def _gram_hash(gram: str) -> tuple[int, float]:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=12).digest()
    bucket = int.from_bytes(digest[:8], "little")
    sign = 1.0 if digest[8] & 1 else -1.0
    return bucket, sign


def hash_embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Character 3-gram signed hashing, L2-normalized.

    The text is wrapped in sentinel characters so any non-empty input
    produces at least one gram; only "" maps to the zero vector.
    """
    if dim < 2:
        raise ValueError(f"hash_embed needs dim >= 2, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    if text == "":
        return vec.astype(np.float32)
    padded = "\x02" + text + "\x03"
    for i in range(len(padded) - 2):
        bucket, sign = _gram_hash(padded[i:i + 3])
        vec[bucket % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # opposite-sign bucket collisions cancelled everything; keep the
        # non-empty-text invariant with a fixed basis vector
        vec[0] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


def hash_store(rows, dim: int = DEFAULT_DIM) -> EmbeddingStore:
    """Embed serialized rows (anything with .row_id and .text)."""
    table = {int(r.row_id): hash_embed(r.text, dim) for r in rows}
    return EmbeddingStore(dim, table, provider_tag=f"hash-{dim}")


def write_embeddings(store: EmbeddingStore, path) -> None:
    """Canonical TGEM bytes: records sorted by row_id."""
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, len(store.rows), store.dim))
        for rid in sorted(store.rows):
            fh.write(struct.pack("<Q", rid))
            fh.write(store.rows[rid].astype("<f4").tobytes())


def load_embeddings(path, provider_tag: str = "file") -> EmbeddingStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER.size:
        raise ValueError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, n, d = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if d <= 0:
        raise ValueError(f"{path}: non-positive dim {d}")
    expect = HEADER.size + n * (8 + 4 * d)
    if len(blob) != expect:
        raise ValueError(f"{path}: expected {expect} bytes for n={n} d={d}, found {len(blob)}")
    rows: dict[int, np.ndarray] = {}
    off = HEADER.size
    rec = 8 + 4 * d
    for _ in range(n):
        (rid,) = struct.unpack_from("<Q", blob, off)
        if rid in rows:
            raise ValueError(f"{path}: duplicate row_id {rid}")
        vec = np.frombuffer(blob, dtype="<f4", count=d, offset=off + 8).copy()
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"{path}: non-finite values in row {rid}")
        rows[rid] = vec
        off += rec
    return EmbeddingStore(int(d), rows, provider_tag=provider_tag)
