"""Reverse-mode automatic differentiation over dense float64 matrices.

A small tape machine in the micrograd tradition, except that node payloads
are 2-D numpy arrays instead of scalars.  Every operation records a node
holding the forward value plus a vector-Jacobian closure; ``Tape.backward``
replays the tape in reverse creation order (creation order is topological
by construction, each node's parents exist before it) and visits each node
exactly once.

Adjoints are accumulated in a scratch buffer per backward call and only
added into ``.grad`` at the end, so calling backward twice without zeroing
yields exactly twice the gradients.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np


class Value:
    """One tape node: a float64 matrix, its accumulated gradient, and the
    closure that pushes an adjoint back to its parents."""

    __slots__ = ("data", "grad", "name", "_parents", "_vjp", "_idx", "_tape")

    def __init__(self, data: np.ndarray, parents: tuple, vjp, idx: int, tape: "Tape", name: str = ""):
        self.data = data
        self.grad = np.zeros_like(data)
        self.name = name
        self._parents = parents
        self._vjp = vjp
        self._idx = idx
        self._tape = tape

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self):
        tag = self.name or "value"
        return f"Value({tag}, shape={self.data.shape})"


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {a.shape}")
    return a


class Tape:
    """Records nodes in topological order and owns the parameter registry."""

    def __init__(self):
        self.nodes: list[Value] = []
        self.params: dict[str, Value] = {}

    def _record(self, data: np.ndarray, parents: tuple = (), vjp=None, name: str = "") -> Value:
        v = Value(data, parents, vjp, len(self.nodes), self, name)
        self.nodes.append(v)
        return v

    def leaf(self, data, name: str = "") -> Value:
        """A constant input. Receives gradients but has no parents."""
        return self._record(_as_matrix(data), name=name)

    def param(self, name: str, data) -> Value:
        """A named trainable leaf, registered for optimizer lookup."""
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        v = self.leaf(data, name=name)
        self.params[name] = v
        return v

    def zero_grad(self):
        for v in self.nodes:
            v.grad[...] = 0.0

    def backward(self, root: Value):
        """Accumulate d(root)/d(node) into every node's .grad.

        The root is seeded with ones (for loss nodes it is 1x1). Adjoints
        live in a scratch list during the sweep; .grad only receives the
        finished per-call adjoint, which keeps repeated calls additive.
        """
        if root._tape is not self:
            raise ValueError("root does not belong to this tape")
        adjoint: list[np.ndarray | None] = [None] * len(self.nodes)
        adjoint[root._idx] = np.ones_like(root.data)
        for node in reversed(self.nodes[: root._idx + 1]):
            a = adjoint[node._idx]
            if a is None:
                continue
            if node._vjp is not None:
                for parent, contrib in zip(node._parents, node._vjp(a)):
                    if contrib is None:
                        continue
                    if contrib.shape != parent.data.shape:
                        raise ValueError(
                            f"vjp shape mismatch at {node!r}: got {contrib.shape}, "
                            f"parent has {parent.data.shape}"
                        )
                    if adjoint[parent._idx] is None:
                        adjoint[parent._idx] = contrib.copy()
                    else:
                        adjoint[parent._idx] += contrib
            node.grad += a

    def gradients(self) -> dict[str, np.ndarray]:
        return {k: v.grad for k, v in self.params.items()}


def _shared_tape(*vals: Value) -> Tape:
    tape = vals[0]._tape
    for v in vals[1:]:
        if v._tape is not tape:
            raise ValueError("operands recorded on different tapes")
    return tape


# ---- primitives -----------------------------------------------------------

def matmul(a: Value, b: Value) -> Value:
    tape = _shared_tape(a, b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return tape._record(out, (a, b), vjp, "matmul")


def transpose(a: Value) -> Value:
    tape = _shared_tape(a)
    return tape._record(np.ascontiguousarray(a.data.T), (a,), lambda g: (np.ascontiguousarray(g.T),), "transpose")


def add(a: Value, b: Value) -> Value:
    """Elementwise sum. b may also be a (1, n) row vector or a (1, 1) scalar,
    broadcast over the rows of a."""
    tape = _shared_tape(a, b)
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        def vjp(g):
            return g, g
    elif sb == (1, sa[1]):
        def vjp(g):
            return g, g.sum(axis=0, keepdims=True)
    elif sb == (1, 1):
        def vjp(g):
            return g, g.sum().reshape(1, 1)
    else:
        raise ValueError(f"add shape mismatch: {sa} + {sb}")
    return tape._record(a.data + b.data, (a, b), vjp, "add")


def scale(a: Value, c: float) -> Value:
    """Multiply by a python constant."""
    tape = _shared_tape(a)
    c = float(c)
    return tape._record(a.data * c, (a,), lambda g: (g * c,), "scale")


def sub(a: Value, b: Value) -> Value:
    return add(a, scale(b, -1.0))


def multiply(a: Value, b: Value) -> Value:
    """Elementwise product; either side may be a (1, 1) scalar node."""
    tape = _shared_tape(a, b)
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        def vjp(g):
            return g * b.data, g * a.data
    elif sb == (1, 1):
        def vjp(g):
            return g * b.data, (g * a.data).sum().reshape(1, 1)
    elif sa == (1, 1):
        def vjp(g):
            return (g * b.data).sum().reshape(1, 1), g * a.data
    else:
        raise ValueError(f"multiply shape mismatch: {sa} * {sb}")
    return tape._record(a.data * b.data, (a, b), vjp, "multiply")


def relu(a: Value) -> Value:
    tape = _shared_tape(a)
    mask = a.data > 0.0  # subgradient at 0 is taken as 0
    return tape._record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def row_l2_normalize(a: Value) -> Value:
    """Divide each row by its L2 norm. Rows must be nonzero; callers that may
    see all-zero rows replace them before building this node."""
    tape = _shared_tape(a)
    norms = np.sqrt((a.data ** 2).sum(axis=1, keepdims=True))
    if np.any(norms == 0.0):
        raise ValueError("row_l2_normalize: zero-norm row")
    y = a.data / norms

    def vjp(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return ((g - y * dot) / norms,)

    return tape._record(y, (a,), vjp, "row_l2_normalize")


def log_softmax(a: Value) -> Value:
    """Row-wise log-softmax with max subtraction."""
    tape = _shared_tape(a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def vjp(g):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return tape._record(out, (a,), vjp, "log_softmax")


def mean(a: Value) -> Value:
    tape = _shared_tape(a)
    size = a.data.size
    out = np.array([[a.data.mean()]])
    return tape._record(out, (a,), lambda g: (np.full_like(a.data, g[0, 0] / size),), "mean")


def total_sum(a: Value) -> Value:
    tape = _shared_tape(a)
    out = np.array([[a.data.sum()]])
    return tape._record(out, (a,), lambda g: (np.full_like(a.data, g[0, 0]),), "sum")


def gather_rows(a: Value, indices) -> Value:
    """Pick one entry per row: out[i, 0] = a[i, indices[i]].

    This is the gather that turns row-wise log-softmax into cross-entropy.
    """
    tape = _shared_tape(a)
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    n, c = a.data.shape
    if idx.shape[0] != n:
        raise ValueError(f"gather_rows: {idx.shape[0]} indices for {n} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= c):
        raise ValueError(f"gather_rows: index out of range for {c} columns")
    rows = np.arange(n)
    out = a.data[rows, idx].reshape(-1, 1)

    def vjp(g):
        da = np.zeros_like(a.data)
        np.add.at(da, (rows, idx), g[:, 0])
        return (da,)

    return tape._record(out, (a,), vjp, "gather_rows")


def stop_gradient(a: Value) -> Value:
    """Forward identity; nothing flows back through this node."""
    tape = _shared_tape(a)
    return tape._record(a.data, (), None, "stop_gradient")


# Block primitives drive per-row graph message passing. A batch of B graphs
# over m nodes is laid out as a (B*m, h) matrix of node states, sample-major.

def block_left_matmul(m: np.ndarray, x: Value, block: int) -> Value:
    """out[b] = m @ x[b] for each consecutive block of `block` rows of x.

    m is a constant (block x block) mixing matrix, shared across samples.
    """
    tape = _shared_tape(x)
    rows, h = x.data.shape
    if rows % block != 0:
        raise ValueError(f"block_left_matmul: {rows} rows not divisible by block {block}")
    if m.shape != (block, block):
        raise ValueError(f"block_left_matmul: mixer {m.shape} vs block {block}")
    x3 = x.data.reshape(-1, block, h)
    out = np.einsum("vu,buh->bvh", m, x3).reshape(rows, h)

    def vjp(g):
        g3 = g.reshape(-1, block, h)
        return (np.einsum("vu,bvh->buh", m, g3).reshape(rows, h),)

    return tape._record(out, (x,), vjp, "block_left_matmul")


def block_mean(x: Value, block: int) -> Value:
    """Mean over each consecutive block of rows: (B*m, h) -> (B, h)."""
    tape = _shared_tape(x)
    rows, h = x.data.shape
    if rows % block != 0:
        raise ValueError(f"block_mean: {rows} rows not divisible by block {block}")
    out = x.data.reshape(-1, block, h).mean(axis=1)

    def vjp(g):
        return (np.repeat(g, block, axis=0) / block,)

    return tape._record(out, (x,), vjp, "block_mean")


def expand_node_features(values: np.ndarray, emb: Value) -> Value:
    """Initial node states: out[(b, v), :] = values[b, v] * emb[v, :].

    values is a constant (B, m) matrix of per-node scalars; emb is the
    trainable (m, h) per-column embedding table.
    """
    tape = _shared_tape(emb)
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 2 or vals.shape[1] != emb.data.shape[0]:
        raise ValueError(f"expand_node_features: values {vals.shape} vs embeddings {emb.data.shape}")
    bsz, m = vals.shape
    h = emb.data.shape[1]
    out = np.einsum("bv,vh->bvh", vals, emb.data).reshape(bsz * m, h)

    def vjp(g):
        g3 = g.reshape(bsz, m, h)
        return (np.einsum("bv,bvh->vh", vals, g3),)

    return tape._record(out, (emb,), vjp, "expand_node_features")


# ---- numerical gradient checking ------------------------------------------

def grad_check(f: Callable[[Tape, dict[str, Value]], Value],
               params: dict[str, np.ndarray],
               epsilon: float = 1e-5) -> float:
    """Compare backward gradients of a scalar function against central
    differences, one coordinate at a time.

    f builds the forward graph from a fresh tape and a dict of bound
    parameter Values and returns a (1, 1) node. Returns the worst relative
    error max(|a - n|) / max(|a|, |n|, 1e-8) over all coordinates.
    """
    arrays = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def run(current: dict[str, np.ndarray]) -> float:
        tape = Tape()
        bound = {k: tape.param(k, v) for k, v in current.items()}
        out = f(tape, bound)
        if out.data.shape != (1, 1):
            raise ValueError(f"grad_check target must be scalar, got {out.data.shape}")
        val = float(out.data[0, 0])
        if not np.isfinite(val):
            raise FloatingPointError("grad_check: non-finite forward value")
        return val

    tape = Tape()
    bound = {k: tape.param(k, v) for k, v in arrays.items()}
    out = f(tape, bound)
    if out.data.shape != (1, 1):
        raise ValueError(f"grad_check target must be scalar, got {out.data.shape}")
    tape.backward(out)
    analytic = {k: bound[k].grad.copy() for k in arrays}

    worst = 0.0
    for name, base in arrays.items():
        flat = base.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + epsilon
            up = run(arrays)
            flat[i] = keep - epsilon
            down = run(arrays)
            flat[i] = keep
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
