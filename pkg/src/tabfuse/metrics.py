"""Ranking metrics."""
from __future__ import annotations

import numpy as np


def _midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group's average rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        # positions i..j (0-based) share the average of ranks i+1..j+1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def _binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    p = int(positive.sum())
    n = len(scores) - p
    if p == 0 or n == 0:
        raise ValueError("AUC needs both classes present")
    ranks = _midranks(scores)
    # Mann-Whitney with midranks equals P(s+ > s-) + 0.5 P(s+ = s-)
    u = ranks[positive].sum() - p * (p + 1) / 2.0
    return u / (p * n)


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve.

    Binary: scores is the positive-class probability vector (or an (n, 2)
    matrix, column 1). Multi-class: an (n, C) matrix scored one-vs-rest per
    class present in labels, macro-averaged. Ties count half. Raises when
    labels hold a single class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if scores.ndim == 2 and scores.shape[1] == 1:
        scores = scores[:, 0]
    if scores.shape[0] != labels.shape[0]:
        raise ValueError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError(f"labels contain a single class ({present.tolist()})")

    if scores.ndim == 1:
        if len(present) != 2:
            raise ValueError("1-D scores require binary labels")
        return _binary_auc(scores, labels == present.max())
    if scores.ndim != 2:
        raise ValueError(f"scores must be 1-D or 2-D, got shape {scores.shape}")
    if scores.shape[1] == 2 and len(present) == 2:
        return _binary_auc(scores[:, 1], labels == present.max())
    per_class = [_binary_auc(scores[:, int(c)], labels == c) for c in present]
    return float(np.mean(per_class))
