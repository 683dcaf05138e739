"""Frozen pretrained encoders behind one small protocol.

Rows arrive as natural-language sentences, so the encoder tokenizes each
one as a query against an empty table (the table structure already lives in
the sentence), runs the model in eval mode, and pools the hidden states.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

MAX_TOKENS = 512
MODEL_IDS = {"tapas-base": "google/tapas-base", "tapex-base": "microsoft/tapex-base"}
POOLINGS = ("cls", "mean")


class ModelLoadError(RuntimeError):
    """Pretrained weights could not be loaded."""


@runtime_checkable
class Encoder(Protocol):
    name: str
    dim: int
    max_tokens: int

    def encode(self, texts: Sequence[str]) -> tuple[np.ndarray, list[int]]:
        """Embed texts into an (n, dim) float32 matrix; also return each
        text's token count before truncation so callers can warn."""
        ...


@dataclass
class PretrainedTableEncoder:
    name: str
    pooling: str = "cls"
    batch_size: int = 16
    dim: int = field(default=0, init=False)
    max_tokens: int = field(default=MAX_TOKENS, init=False)

    def __post_init__(self):
        if self.name not in MODEL_IDS:
            raise ModelLoadError(
                f"unknown model {self.name!r}; choose from {sorted(MODEL_IDS)}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        model_id = MODEL_IDS[self.name]
        try:
            import pandas
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as e:
            raise ModelLoadError(
                f"{model_id} needs the [models] extra (transformers, torch, pandas): {e}"
            ) from None
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModel.from_pretrained(model_id)
        except Exception as e:  # transformers raises many distinct types here
            raise ModelLoadError(f"could not load {model_id}: {e}") from None
        self._model.eval()
        self._pandas, self._torch = pandas, torch
        self.dim = int(self._model.config.hidden_size)

    def _tokenize(self, chunk: list[str], **kwargs):
        table = self._pandas.DataFrame()
        try:
            return self._tokenizer(table=table, queries=chunk, **kwargs)
        except TypeError:  # TAPEX-style tokenizers take `query` instead
            return self._tokenizer(table=table, query=chunk, **kwargs)

    def _token_count(self, text: str) -> int:
        return len(self._tokenize([text])["input_ids"][0])

    def encode(self, texts: Sequence[str]) -> tuple[np.ndarray, list[int]]:
        torch = self._torch
        vecs: list[np.ndarray] = []
        counts: list[int] = []
        with torch.no_grad():
            for start in range(0, len(texts), self.batch_size):
                chunk = list(texts[start:start + self.batch_size])
                counts.extend(self._token_count(t) for t in chunk)
                enc = self._tokenize(chunk, padding=True, truncation=True,
                                     max_length=self.max_tokens, return_tensors="pt")
                hidden = self._model(**enc).last_hidden_state
                if self.pooling == "cls":
                    pooled = hidden[:, 0, :]
                else:
                    mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                    pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
                vecs.append(pooled.cpu().numpy().astype(np.float32))
        if not vecs:
            return np.zeros((0, self.dim), dtype=np.float32), counts
        return np.concatenate(vecs, axis=0), counts
