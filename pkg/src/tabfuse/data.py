"""Tabular data loading, schema inference, preprocessing and splitting.

CSV input is RFC-4180 with a header row, UTF-8, where an empty string means
a missing cell. A column is numeric when every non-missing cell parses as a
finite real; everything else is categorical. Features are scaled into
[0, 1]: min-max for numeric columns (train statistics, clipped), indicator
expansion or index scaling for categorical ones.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
MISSING_CATEGORY = "__missing__"
ONEHOT = "onehot"
LABEL = "label"
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # NUMERIC or CATEGORICAL

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown column kind {self.kind!r}")


@dataclass(frozen=True)
class TableSchema:
    """Ordered feature columns plus the label column and its class names."""

    columns: tuple[Column, ...]
    label_column: str
    class_names: tuple[str, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature column names")
        if self.label_column in names:
            raise ValueError("label column listed among features")
        if len(self.class_names) < 2:
            raise ValueError("schema needs at least two classes")
        if list(self.class_names) != sorted(set(self.class_names)):
            raise ValueError("class names must be sorted and distinct")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def numeric_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.kind == NUMERIC)

    def class_index(self, label: str) -> int:
        try:
            return self.class_names.index(label)
        except ValueError:
            raise ValueError(f"label {label!r} not among classes {self.class_names}") from None

    def to_json(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "label_column": self.label_column,
            "class_names": list(self.class_names),
        }

    @staticmethod
    def from_json(obj: dict) -> "TableSchema":
        cols = tuple(Column(c["name"], c["kind"]) for c in obj["columns"])
        return TableSchema(cols, obj["label_column"], tuple(obj["class_names"]))


@dataclass(frozen=True)
class Dataset:
    """Raw rows (string cells, None for missing) with integer labels and
    stable row ids. Cells follow schema column order."""

    schema: TableSchema
    cells: tuple[tuple, ...]
    labels: np.ndarray
    row_ids: np.ndarray

    def __post_init__(self):
        m = len(self.schema.columns)
        for r in self.cells:
            if len(r) != m:
                raise ValueError(f"row has {len(r)} cells, schema has {m} columns")
        if len(self.cells) != len(self.labels) or len(self.cells) != len(self.row_ids):
            raise ValueError("cells, labels and row_ids must align")
        if len(np.unique(self.row_ids)) != len(self.row_ids):
            raise ValueError("row ids must be unique")

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def n(self) -> int:
        return len(self.cells)

    def subset(self, ids: set[int]) -> "Dataset":
        keep = [i for i, rid in enumerate(self.row_ids) if int(rid) in ids]
        return Dataset(
            self.schema,
            tuple(self.cells[i] for i in keep),
            self.labels[keep],
            self.row_ids[keep],
        )


def parse_finite(text: str):
    """Return the float value of text, or None when it is not a finite real."""
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _read_csv(csv_path) -> tuple[list[str], list[list[str]]]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{csv_path}: empty file") from None
        rows = [r for r in reader]
    if len(set(header)) != len(header):
        raise ValueError(f"{csv_path}: duplicate column names in header")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ValueError(f"{csv_path}: row {i + 1} has {len(r)} cells, header has {len(header)}")
    return header, rows


def infer_schema(csv_path, label_column: str) -> TableSchema:
    """Scan a CSV once and decide each feature column's kind.

    Numeric means every non-missing cell parses as a finite real. The label
    column's sorted distinct values become the class names.
    """
    header, rows = _read_csv(csv_path)
    if label_column not in header:
        raise ValueError(f"label column {label_column!r} not in header {header}")
    if len(rows) < 2:
        raise ValueError(f"{csv_path}: need at least two data rows")
    label_idx = header.index(label_column)

    labels = []
    for i, r in enumerate(rows):
        if r[label_idx] == "":
            raise ValueError(f"{csv_path}: missing label in row {i + 1}")
        labels.append(r[label_idx])
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError(f"{csv_path}: labels contain a single class {classes[0]!r}")

    columns = []
    for j, name in enumerate(header):
        if j == label_idx:
            continue
        seen = [r[j] for r in rows if r[j] != ""]
        numeric = bool(seen) and all(parse_finite(c) is not None for c in seen)
        columns.append(Column(name, NUMERIC if numeric else CATEGORICAL))
    if not columns:
        raise ValueError(f"{csv_path}: no feature columns besides the label")
    return TableSchema(tuple(columns), label_column, tuple(classes))


def load_dataset(csv_path, label_column: str, schema: TableSchema | None = None) -> Dataset:
    """Load rows against a schema (inferred from this file when omitted).

    Cells are reordered to schema column order, so a test CSV may permute
    its physical columns. Row ids are the 0-based data row positions.
    """
    if schema is None:
        schema = infer_schema(csv_path, label_column)
    header, rows = _read_csv(csv_path)
    if schema.label_column not in header:
        raise ValueError(f"label column {schema.label_column!r} not in header")
    for name in schema.feature_names:
        if name not in header:
            raise ValueError(f"column {name!r} required by schema but absent from CSV")
    label_idx = header.index(schema.label_column)
    order = [header.index(name) for name in schema.feature_names]

    cells = []
    labels = []
    for i, r in enumerate(rows):
        if r[label_idx] == "":
            raise ValueError(f"{csv_path}: missing label in row {i + 1}")
        labels.append(schema.class_index(r[label_idx]))
        cells.append(tuple(None if r[j] == "" else r[j] for j in order))
    return Dataset(schema, tuple(cells), np.asarray(labels, dtype=np.int64),
                   np.arange(len(cells), dtype=np.int64))


# ---- preprocessing ---------------------------------------------------------

@dataclass(frozen=True)
class NumericStats:
    min: float
    max: float
    impute: float  # train median, raw scale


@dataclass(frozen=True)
class CategoricalStats:
    vocabulary: tuple[str, ...]
    impute: str = MISSING_CATEGORY


@dataclass(frozen=True)
class Preprocessor:
    schema: TableSchema
    numeric: dict[str, NumericStats]
    categorical: dict[str, CategoricalStats]
    mode: str  # ONEHOT or LABEL

    def expanded_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for col in self.schema.columns:
            if col.kind == NUMERIC:
                names.append(col.name)
            elif self.mode == ONEHOT:
                names.extend(f"{col.name}={cat}" for cat in self.categorical[col.name].vocabulary)
            else:
                names.append(col.name)
        return tuple(names)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "numeric": {
                k: {"min": s.min, "max": s.max, "impute": s.impute}
                for k, s in self.numeric.items()
            },
            "categorical": {
                k: {"vocabulary": list(s.vocabulary), "impute": s.impute}
                for k, s in self.categorical.items()
            },
        }

    @staticmethod
    def from_json(obj: dict, schema: TableSchema) -> "Preprocessor":
        numeric = {k: NumericStats(v["min"], v["max"], v["impute"]) for k, v in obj["numeric"].items()}
        categorical = {
            k: CategoricalStats(tuple(v["vocabulary"]), v.get("impute", MISSING_CATEGORY))
            for k, v in obj["categorical"].items()
        }
        return Preprocessor(schema, numeric, categorical, obj["mode"])


@dataclass(frozen=True)
class NumericMatrix:
    values: np.ndarray  # n x m', float64, in [0, 1]
    expanded_names: tuple[str, ...]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def fit_preprocessor(train: Dataset, mode: str = ONEHOT) -> Preprocessor:
    """Collect per-column statistics from the training split only."""
    if mode not in (ONEHOT, LABEL):
        raise ValueError(f"unknown encoding mode {mode!r}")
    numeric: dict[str, NumericStats] = {}
    categorical: dict[str, CategoricalStats] = {}
    for j, col in enumerate(train.schema.columns):
        column = [r[j] for r in train.cells]
        if col.kind == NUMERIC:
            vals = [parse_finite(c) for c in column if c is not None]
            vals = [v for v in vals if v is not None]
            if vals:
                arr = np.asarray(vals, dtype=np.float64)
                numeric[col.name] = NumericStats(float(arr.min()), float(arr.max()), float(np.median(arr)))
            else:
                # all-missing column degenerates to the constant 0
                numeric[col.name] = NumericStats(0.0, 0.0, 0.0)
        else:
            vocab = sorted({c for c in column if c is not None})
            if MISSING_CATEGORY not in vocab:
                vocab.append(MISSING_CATEGORY)
            categorical[col.name] = CategoricalStats(tuple(vocab))
    return Preprocessor(train.schema, numeric, categorical, mode)


def transform(prep: Preprocessor, data: Dataset) -> NumericMatrix:
    """Encode raw rows into the [0, 1] numeric matrix.

    Numeric: impute the train median, min-max scale, clip to [0, 1];
    constant train columns map to 0. Categorical: one-hot over the train
    vocabulary (unseen and missing fall into the reserved bucket), or the
    scaled vocabulary index in label mode.
    """
    if data.schema != prep.schema:
        raise ValueError("dataset schema does not match the fitted preprocessor")
    blocks: list[np.ndarray] = []
    n = len(data)
    for j, col in enumerate(data.schema.columns):
        column = [r[j] for r in data.cells]
        if col.kind == NUMERIC:
            st = prep.numeric[col.name]
            raw = np.empty(n, dtype=np.float64)
            for i, c in enumerate(column):
                v = parse_finite(c) if c is not None else None
                raw[i] = st.impute if v is None else v
            span = st.max - st.min
            if span == 0.0:
                scaled = np.zeros(n, dtype=np.float64)
            else:
                scaled = np.clip((raw - st.min) / span, 0.0, 1.0)
            blocks.append(scaled.reshape(-1, 1))
        else:
            st = prep.categorical[col.name]
            lookup = {cat: k for k, cat in enumerate(st.vocabulary)}
            fallback = lookup[st.impute]
            idx = np.array([lookup.get(c, fallback) if c is not None else fallback for c in column],
                           dtype=np.int64)
            if prep.mode == ONEHOT:
                block = np.zeros((n, len(st.vocabulary)), dtype=np.float64)
                block[np.arange(n), idx] = 1.0
                blocks.append(block)
            else:
                denom = max(len(st.vocabulary) - 1, 1)
                blocks.append((idx.astype(np.float64) / denom).reshape(-1, 1))
    values = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return NumericMatrix(values, prep.expanded_names())


# ---- splitting -------------------------------------------------------------

def _bucket_counts(n_class: int, fractions: tuple[float, float, float],
                   rotation: int = 0) -> list[int]:
    raw = [f * n_class for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    leftover = n_class - sum(counts)
    # ties in the remainders rotate across strata so rounding leftovers do
    # not all land in the same bucket
    by_fraction = sorted(range(3), key=lambda i: (-(raw[i] - counts[i]), (i + rotation) % 3))
    for i in range(leftover):
        counts[by_fraction[i]] += 1
    # every bucket gets at least one row; steal from the largest
    for i in range(3):
        while counts[i] == 0:
            donor = max(range(3), key=lambda k: counts[k])
            counts[donor] -= 1
            counts[i] += 1
    return counts


def split(data: Dataset, seed: int,
          fractions: tuple[float, float, float] = DEFAULT_FRACTIONS) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic stratified train/val/test split.

    Within each class, row ids are sorted and shuffled by a generator seeded
    from (seed, class index), then dealt into buckets, so the id-to-split
    assignment depends only on row contents and the seed, never on the
    physical row order.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f <= 0 for f in fractions):
        raise ValueError(f"fractions must be positive and sum to 1, got {fractions}")
    assign: dict[int, int] = {}
    for ci, cname in enumerate(data.schema.class_names):
        ids = sorted(int(r) for r, l in zip(data.row_ids, data.labels) if int(l) == ci)
        if len(ids) < 3:
            raise ValueError(f"class {cname!r} has {len(ids)} rows, fewer than the 3 split buckets")
        rng = np.random.default_rng([seed, ci])
        ids = list(np.asarray(ids)[rng.permutation(len(ids))])
        counts = _bucket_counts(len(ids), fractions, rotation=ci)
        start = 0
        for bucket, cnt in enumerate(counts):
            for rid in ids[start:start + cnt]:
                assign[int(rid)] = bucket
            start += cnt
    parts = []
    for bucket in range(3):
        ids = {rid for rid, b in assign.items() if b == bucket}
        parts.append(data.subset(ids))
    return tuple(parts)


def save_preprocessor(prep: Preprocessor, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(prep.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_preprocessor(path, schema: TableSchema) -> Preprocessor:
    with open(path, encoding="utf-8") as fh:
        return Preprocessor.from_json(json.load(fh), schema)
