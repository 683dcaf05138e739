"""Row-as-graph view: one node per encoded column, fully connected,
edges weighted by |Pearson| correlation measured on the training split."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import NumericMatrix


@dataclass(frozen=True)
class ColumnGraphSpec:
    """Shared topology for every row graph of a dataset."""

    adjacency: np.ndarray  # m' x m', all ones (self-loops included)
    edge_weights: np.ndarray  # m' x m', symmetric, [0, 1], unit diagonal
    node_names: tuple[str, ...]

    def __post_init__(self):
        m = len(self.node_names)
        w = self.edge_weights
        if self.adjacency.shape != (m, m) or w.shape != (m, m):
            raise ValueError("graph matrices must be m' x m'")
        if not np.all(self.adjacency == 1.0):
            raise ValueError("adjacency must be all ones")
        if not np.array_equal(w, w.T):
            raise ValueError("edge weights must be symmetric")
        if np.any(w < 0.0) or np.any(w > 1.0):
            raise ValueError("edge weights must lie in [0, 1]")
        if not np.all(np.diag(w) == 1.0):
            raise ValueError("edge weight diagonal must be 1")

    @property
    def num_nodes(self) -> int:
        return len(self.node_names)

    def offdiagonal(self) -> np.ndarray:
        """Weights with the self-loop removed; the self term is handled by
        the encoder's (1 + eps) path."""
        w = self.edge_weights.copy()
        np.fill_diagonal(w, 0.0)
        return w

    def to_json(self) -> dict:
        return {"nodes": list(self.node_names),
                "weights": [float(x) for x in self.edge_weights.reshape(-1)]}

    @staticmethod
    def from_json(obj: dict) -> "ColumnGraphSpec":
        names = tuple(obj["nodes"])
        m = len(names)
        w = np.asarray(obj["weights"], dtype=np.float64).reshape(m, m)
        return ColumnGraphSpec(np.ones((m, m)), w, names)


@dataclass(frozen=True)
class RowGraph:
    node_values: np.ndarray  # length m'
    spec: ColumnGraphSpec

    def __post_init__(self):
        if self.node_values.shape != (self.spec.num_nodes,):
            raise ValueError(
                f"row has {self.node_values.shape} values for {self.spec.num_nodes} nodes")


def compute_edge_weights(train: NumericMatrix | np.ndarray,
                         node_names: tuple[str, ...] | None = None) -> ColumnGraphSpec:
    """Absolute Pearson correlation between encoded columns, computed once
    on training rows. Zero-variance columns get 0 off-diagonal weight; the
    diagonal is pinned to 1."""
    if isinstance(train, NumericMatrix):
        x = train.values
        names = train.expanded_names if node_names is None else node_names
    else:
        x = np.asarray(train, dtype=np.float64)
        if node_names is None:
            raise ValueError("node_names required when passing a bare array")
        names = node_names
    n, m = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 training rows to correlate, got {n}")
    dev = x - x.mean(axis=0, keepdims=True)
    sd = np.sqrt((dev ** 2).mean(axis=0))
    z = np.divide(dev, sd, out=np.zeros_like(dev), where=sd > 0)
    corr = (z.T @ z) / n
    w = np.abs(corr)
    w = np.clip((w + w.T) / 2.0, 0.0, 1.0)  # exact symmetry despite BLAS rounding
    np.fill_diagonal(w, 1.0)
    return ColumnGraphSpec(np.ones((m, m)), w, tuple(names))


def row_to_graph(row_values: np.ndarray, spec: ColumnGraphSpec) -> RowGraph:
    return RowGraph(np.asarray(row_values, dtype=np.float64), spec)


def rows_to_batch(graphs: list[RowGraph]) -> np.ndarray:
    """Stack row graphs sharing one spec into a (B, m') node-value matrix."""
    if not graphs:
        raise ValueError("empty batch")
    spec = graphs[0].spec
    for g in graphs[1:]:
        if g.spec is not spec and not np.array_equal(g.spec.edge_weights, spec.edge_weights):
            raise ValueError("row graphs in a batch must share one spec")
    return np.stack([g.node_values for g in graphs])


def save_graph_spec(spec: ColumnGraphSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_json(), fh)
        fh.write("\n")


def load_graph_spec(path) -> ColumnGraphSpec:
    with open(path, encoding="utf-8") as fh:
        return ColumnGraphSpec.from_json(json.load(fh))
