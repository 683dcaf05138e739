"""Offline exporter: serialized-row JSONL corpus in, TGEM embedding file out.

The heavy lifting happens in a frozen pretrained table-text encoder
(TAPAS-base by default, TAPEX-base selectable); any object satisfying the
small ``Encoder`` protocol can be injected instead.
"""
from .corpus import CorpusRow, read_corpus
from .encoders import Encoder, ModelLoadError, PretrainedTableEncoder
from .exporter import ExportJob, export
from .tgem import read_tgem, write_tgem

__all__ = ["CorpusRow", "read_corpus", "Encoder", "ModelLoadError",
           "PretrainedTableEncoder", "ExportJob", "export",
           "read_tgem", "write_tgem"]
