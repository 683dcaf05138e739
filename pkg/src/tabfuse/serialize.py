"""Row-to-sentence serialization for the text branch.

Each feature cell becomes "The <column> is <value>." in schema order; the
label column never appears (that would leak the target into the text view).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .data import Dataset, TableSchema, NUMERIC, parse_finite

TOKEN_LIMIT = 512
# crude whitespace-to-subword inflation factor for budget estimates
TOKENS_PER_WORD = 1.3


@dataclass(frozen=True)
class SerializedRow:
    row_id: int
    text: str
    estimated_tokens: int


class BudgetCheck(NamedTuple):
    ok: bool
    excess: int


def format_number(value: float) -> str:
    """Up to 6 significant digits, no trailing zeros ("34", "3.5", "350")."""
    out = f"{value:.6g}"
    return out


def serialize_row(row_id: int, cells, schema: TableSchema) -> SerializedRow:
    parts = []
    for col, cell in zip(schema.columns, cells):
        if cell is None:
            rendered = "missing"
        elif col.kind == NUMERIC:
            v = parse_finite(cell)
            rendered = format_number(v) if v is not None else str(cell)
        else:
            rendered = str(cell)
        parts.append(f"The {col.name} is {rendered}.")
    text = " ".join(parts)
    est = math.ceil(TOKENS_PER_WORD * len(text.split()))
    return SerializedRow(int(row_id), text, est)


def serialize_dataset(data: Dataset) -> list[SerializedRow]:
    return [serialize_row(rid, cells, data.schema)
            for rid, cells in zip(data.row_ids, data.cells)]


def check_token_budget(row: SerializedRow, limit: int = TOKEN_LIMIT) -> BudgetCheck:
    """Ok when the estimate fits, otherwise Warn with the excess count."""
    excess = row.estimated_tokens - limit
    if excess > 0:
        return BudgetCheck(False, excess)
    return BudgetCheck(True, 0)


def write_corpus(rows: Iterable[SerializedRow], path) -> None:
    """JSONL corpus, one {"row_id", "text"} object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps({"row_id": int(r.row_id), "text": r.text}))
            fh.write("\n")


def read_corpus(path) -> list[SerializedRow]:
    out = []
    seen = set()
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
            if rid in seen:
                raise ValueError(f"{path}: duplicate row_id {rid} at line {lineno}")
            seen.add(rid)
            est = math.ceil(TOKENS_PER_WORD * len(text.split()))
            out.append(SerializedRow(rid, text, est))
    return out
