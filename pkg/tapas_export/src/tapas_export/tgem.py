"""TGEM embedding file IO.

Layout (little-endian throughout):

    magic   4 bytes   b"TGEM"
    version u32       1
    n       u64       number of rows
    d       u64       embedding width
    records n times   u64 row_id, then d float32 values

so a well-formed file is exactly 24 + n * (8 + 4 * d) bytes. Records are
written sorted by row_id, making the byte stream canonical for a given
mapping.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"TGEM"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")


def write_tgem(rows: dict[int, np.ndarray], dim: int, path) -> None:
    """Write the store atomically: a temp file in the target directory is
    fully written first, then renamed over the destination."""
    if dim <= 0:
        raise ValueError(f"embedding dim must be positive, got {dim}")
    for rid, vec in rows.items():
        vec = np.asarray(vec)
        if vec.shape != (dim,):
            raise ValueError(f"row {rid} has shape {vec.shape}, expected ({dim},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"row {rid} contains non-finite values")

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                               prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, len(rows), dim))
            for rid in sorted(rows):
                fh.write(struct.pack("<Q", int(rid)))
                fh.write(np.asarray(rows[rid], dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_tgem(path) -> tuple[int, dict[int, np.ndarray]]:
    """Validating reader; returns (dim, {row_id: float32 vector})."""
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
    for _ in range(n):
        (rid,) = struct.unpack_from("<Q", blob, off)
        if rid in rows:
            raise ValueError(f"{path}: duplicate row_id {rid}")
        rows[rid] = np.frombuffer(blob, dtype="<f4", count=d, offset=off + 8).copy()
        off += 8 + 4 * d
    return int(d), rows
