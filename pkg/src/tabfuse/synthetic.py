"""Deterministic synthetic datasets for demos, tests and the desk-scale
benchmark runs.

The donation benchmark mirrors the published blood-transfusion table's
shape: 748 rows, four integer columns (months since last donation, donation
count, total volume pinned at 250 * count, months since first donation) and
a binary label at roughly 24% positive rate. The generator is frozen; the
real CSV can be dropped in instead whenever it is available.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .data import CATEGORICAL, NUMERIC, Column, Dataset, TableSchema
from .embed import EmbeddingStore


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def dataset_from_arrays(features: np.ndarray, labels: np.ndarray,
                        column_names: list[str], class_names: list[str],
                        label_column: str = "target",
                        formats: str = "%.9g") -> Dataset:
    cols = tuple(Column(c, NUMERIC) for c in column_names)
    schema = TableSchema(cols, label_column, tuple(sorted(class_names)))
    cells = tuple(tuple(formats % v for v in row) for row in features)
    return Dataset(schema, cells, np.asarray(labels, dtype=np.int64),
                   np.arange(len(cells), dtype=np.int64))


def blood_like(seed: int = 20240) -> Dataset:
    """748-row donation table with collinear volume column and a recency /
    frequency driven label, calibrated to ~23.8% positives."""
    n = 748
    rng = np.random.default_rng(seed)
    frequency = np.clip(1 + rng.poisson(3.0, size=n), 1, 50)
    monetary = 250 * frequency
    time = np.clip(frequency * 3 + np.round(rng.exponential(18.0, size=n)).astype(int), 2, 98)
    recency = np.clip(np.round(rng.exponential(9.0, size=n)).astype(int), 0, 74)

    score = -0.18 * recency + 0.35 * frequency - 0.045 * time
    # calibrate the intercept so the positive rate lands at the target
    target_rate = 0.238
    lo, hi = -20.0, 20.0
    for _ in range(60):
        mid = (lo + hi) / 2.0
        if _sigmoid(score + mid).mean() > target_rate:
            hi = mid
        else:
            lo = mid
    probs = _sigmoid(score + (lo + hi) / 2.0)
    labels = (rng.uniform(size=n) < probs).astype(np.int64)

    features = np.stack([recency, frequency, monetary, time], axis=1).astype(np.float64)
    names = ["recency_months", "frequency_times", "monetary_cc", "time_months"]
    cols = tuple(Column(c, NUMERIC) for c in names)
    schema = TableSchema(cols, "donated", ("0", "1"))
    cells = tuple(tuple(str(int(v)) for v in row) for row in features)
    return Dataset(schema, cells, labels, np.arange(n, dtype=np.int64))


def separable(n: int = 200, cols: int = 4, seed: int = 11, margin: float = 2.0) -> Dataset:
    """Two well-separated Gaussian blobs; any sane training run should rank
    them almost perfectly."""
    rng = np.random.default_rng(seed)
    labels = (rng.uniform(size=n) < 0.5).astype(np.int64)
    direction = rng.normal(size=cols)
    direction /= np.linalg.norm(direction)
    base = rng.normal(size=(n, cols))
    features = base + np.outer(np.where(labels == 1, margin, -margin), direction)
    return dataset_from_arrays(features, labels, [f"x{i}" for i in range(cols)], ["0", "1"])


def label_independent(n: int = 200, cols: int = 4, seed: int = 7) -> Dataset:
    """Numeric columns carry no information about the label at all."""
    rng = np.random.default_rng(seed)
    features = rng.uniform(size=(n, cols))
    labels = (np.random.default_rng(seed + 9001).uniform(size=n) < 0.5).astype(np.int64)
    return dataset_from_arrays(features, labels, [f"x{i}" for i in range(cols)], ["0", "1"])


def label_coded_store(data: Dataset, embed_dim: int = 16, noise: float = 0.05,
                      seed: int = 13) -> EmbeddingStore:
    """Embeddings that injectively encode each row's true label (one fixed
    unit direction per class) plus small isotropic noise."""
    rng = np.random.default_rng(seed)
    classes = len(data.schema.class_names)
    anchors = np.zeros((classes, embed_dim))
    for c in range(classes):
        anchors[c, c % embed_dim] = 1.0
    rows = {}
    for rid, label in zip(data.row_ids, data.labels):
        vec = anchors[int(label)] + noise * rng.normal(size=embed_dim)
        rows[int(rid)] = vec.astype(np.float32)
    return EmbeddingStore(embed_dim, rows, provider_tag="file")


def mixed_toy(n: int = 120, seed: int = 3) -> Dataset:
    """Two numeric and two categorical columns, all weakly predictive."""
    rng = np.random.default_rng(seed)
    labels = (rng.uniform(size=n) < 0.5).astype(np.int64)
    x0 = rng.normal(size=n) + 1.2 * labels
    x1 = rng.normal(size=n) - 0.8 * labels
    colors = np.array(["red", "green", "blue"])
    sizes = np.array(["s", "m", "l", "xl"])
    c0 = colors[(labels + rng.integers(0, 2, size=n)) % 3]
    c1 = sizes[rng.integers(0, 4, size=n)]
    cols = (Column("x0", NUMERIC), Column("x1", NUMERIC),
            Column("color", CATEGORICAL), Column("size", CATEGORICAL))
    schema = TableSchema(cols, "y", ("0", "1"))
    cells = tuple((f"{a:.6g}", f"{b:.6g}", c, d) for a, b, c, d in zip(x0, x1, c0, c1))
    return Dataset(schema, cells, labels, np.arange(n, dtype=np.int64))


def dataset_to_csv(data: Dataset, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.schema.feature_names) + [data.schema.label_column])
        for cells, label in zip(data.cells, data.labels):
            row = ["" if c is None else c for c in cells]
            row.append(data.schema.class_names[int(label)])
            writer.writerow(row)
    return path
