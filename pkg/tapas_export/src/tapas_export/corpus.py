"""Reader for the JSONL row corpus: one {"row_id", "text"} object per line."""
from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass(frozen=True)
class CorpusRow:
    row_id: int
    text: str


def read_corpus(path) -> list[CorpusRow]:
    """Parse the corpus, rejecting malformed lines and duplicate row ids."""
    rows: list[CorpusRow] = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rid, text = int(obj["row_id"]), obj["text"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}: bad corpus line {lineno}: {e}") from None
            if not isinstance(text, str):
                raise ValueError(f"{path}: bad corpus line {lineno}: text must be a string")
            if rid in seen:
                raise ValueError(f"{path}: duplicate row_id {rid} at line {lineno}")
            seen.add(rid)
            rows.append(CorpusRow(rid, text))
    return rows
