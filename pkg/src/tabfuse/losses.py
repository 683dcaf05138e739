"""Training objectives.

The consistency term is a symmetric InfoNCE over a minibatch: both branch
embeddings are row-normalized, each side scores against a stop-gradient
copy of the other, and only the diagonal (same row in both views) counts
as a positive. With batch size B and temperature tau:

    loss = -(1/2B) * sum_i [ log softmax_j(t_i . sg(g_j) / tau)[i]
                           + log softmax_j(g_i . sg(t_j) / tau)[i] ]

The supervised term is mean cross-entropy built from log-softmax plus a
per-row gather, never from logs of a softmax.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

log = logging.getLogger("tabfuse")


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.1
    lam: float = 0.2

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")


def _guard_zero_rows(x: ad.Value) -> ad.Value:
    """Replace exactly-zero rows with a fixed basis vector so normalization
    is defined. Gradient through replaced rows is blocked (they carry no
    direction to begin with)."""
    norms = np.sqrt((x.data ** 2).sum(axis=1))
    bad = norms == 0.0
    if not np.any(bad):
        return x
    log.warning("consistency loss: %d zero-norm embedding row(s) replaced by a unit basis vector",
                int(bad.sum()))
    tape = x._tape
    keep = tape.leaf(np.where(bad[:, None], 0.0, 1.0) * np.ones_like(x.data))
    basis = np.zeros_like(x.data)
    basis[bad, 0] = 1.0
    return ad.add(ad.multiply(x, keep), tape.leaf(basis))


def consistency_loss(tape: ad.Tape, g_text: ad.Value, g_graph: ad.Value, tau: float,
                     frozen_text: np.ndarray | None = None,
                     frozen_graph: np.ndarray | None = None) -> ad.Value:
    """The stopped operands default to stop-gradient copies of the live
    normalized branches. Numerical gradient checking may instead pass
    frozen_text/frozen_graph, the normalized matrices captured at the base
    parameters: the training gradient treats the stopped side as a per-step
    constant, so finite differences must hold it fixed too. Values and
    gradients at the base point are identical either way."""
    if g_text.data.shape != g_graph.data.shape:
        raise ValueError(f"branch shapes differ: {g_text.data.shape} vs {g_graph.data.shape}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    b = g_text.data.shape[0]
    t_hat = ad.row_l2_normalize(_guard_zero_rows(g_text))
    g_hat = ad.row_l2_normalize(_guard_zero_rows(g_graph))
    t_stop = tape.leaf(frozen_text) if frozen_text is not None else ad.stop_gradient(t_hat)
    g_stop = tape.leaf(frozen_graph) if frozen_graph is not None else ad.stop_gradient(g_hat)
    diag = np.arange(b)

    logits_t = ad.scale(ad.matmul(t_hat, ad.transpose(g_stop)), 1.0 / tau)
    logits_g = ad.scale(ad.matmul(g_hat, ad.transpose(t_stop)), 1.0 / tau)
    pos_t = ad.gather_rows(ad.log_softmax(logits_t), diag)
    pos_g = ad.gather_rows(ad.log_softmax(logits_g), diag)
    return ad.scale(ad.add(ad.total_sum(pos_t), ad.total_sum(pos_g)), -1.0 / (2.0 * b))


def normalized_rows(x: np.ndarray) -> np.ndarray:
    """Row-normalized copy of a plain matrix with the same zero-row guard the
    loss applies; used to capture frozen stopped operands."""
    x = np.array(x, dtype=np.float64)
    norms = np.sqrt((x ** 2).sum(axis=1, keepdims=True))
    bad = norms[:, 0] == 0.0
    if np.any(bad):
        x[bad] = 0.0
        x[bad, 0] = 1.0
        norms[bad] = 1.0
    return x / norms


def supervised_loss(tape: ad.Tape, logits: ad.Value, labels) -> ad.Value:
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    b, c = logits.data.shape
    if labels.shape[0] != b:
        raise ValueError(f"{labels.shape[0]} labels for {b} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range for {c} classes")
    picked = ad.gather_rows(ad.log_softmax(logits), labels)
    return ad.scale(ad.total_sum(picked), -1.0 / b)


def joint_loss(l_sup: ad.Value, l_cons: ad.Value, lam: float) -> ad.Value:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    return ad.add(ad.scale(l_sup, 1.0 - lam), ad.scale(l_cons, lam))
