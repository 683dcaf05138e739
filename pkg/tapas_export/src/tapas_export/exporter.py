"""Run one export job: corpus in, TGEM file out."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .corpus import read_corpus
from .encoders import Encoder, PretrainedTableEncoder
from .tgem import write_tgem

log = logging.getLogger("tapas_export")


@dataclass(frozen=True)
class ExportJob:
    corpus_path: str | Path
    model: str = "tapas-base"
    pooling: str = "cls"
    out_path: str | Path = "embeddings.tgem"
    batch_size: int = 16


def export(job: ExportJob, encoder: Encoder | None = None) -> dict:
    """Embed every corpus row and write the TGEM file atomically.

    Pass ``encoder`` to substitute the pretrained model (tests inject a
    deterministic stub). Returns a summary dict; rows longer than the
    encoder's token limit are truncated with a logged warning.
    """
    rows = read_corpus(job.corpus_path)
    if not rows:
        raise ValueError(f"{job.corpus_path}: corpus is empty")
    if encoder is None:
        encoder = PretrainedTableEncoder(job.model, job.pooling, job.batch_size)

    vectors, counts = encoder.encode([r.text for r in rows])
    if vectors.shape != (len(rows), encoder.dim):
        raise ValueError(f"encoder returned {vectors.shape}, "
                         f"expected ({len(rows)}, {encoder.dim})")

    truncated = 0
    for row, count in zip(rows, counts):
        if count > encoder.max_tokens:
            truncated += 1
            log.warning("row %d has %d tokens; truncated to %d",
                        row.row_id, count, encoder.max_tokens)

    write_tgem({row.row_id: vectors[i] for i, row in enumerate(rows)},
               encoder.dim, job.out_path)
    return {"rows": len(rows), "dim": encoder.dim,
            "truncated": truncated, "out": str(job.out_path)}
