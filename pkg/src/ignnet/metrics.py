"""Ranking and similarity metrics: AUC, Spearman's rho, cosine similarity."""

from __future__ import annotations

import logging

import numpy as np
from scipy.stats import rankdata

from .errors import ShapeError, UndefinedAUCError

logger = logging.getLogger(__name__)


def auc_binary(scores, labels) -> float:
    """Mann-Whitney AUC: probability that a random positive scores above a
    random negative, ties counted as one half.

    Args:
        scores: real-valued scores, higher meaning more positive.
        labels: 0/1 (or boolean) labels of the same length.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"auc: scores {scores.shape} vs labels {labels.shape}")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("auc: both classes must be present")
    ranks = rankdata(scores)  # average ranks for ties
    # 2 * U is an integer, so the division below is the only rounding step
    twice_u = 2.0 * ranks[labels].sum() - n_pos * (n_pos + 1.0)
    return twice_u / (2.0 * n_pos * n_neg)


def auc_weighted(scores, labels) -> float:
    """Support-weighted one-vs-rest AUC for a score matrix (rows x classes)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ShapeError(f"auc_weighted: scores {scores.shape} vs labels {labels.shape}")
    k = scores.shape[1]
    counts = np.bincount(labels, minlength=k)
    if len(counts) > k or (counts == 0).any():
        raise UndefinedAUCError(f"auc_weighted: class counts {counts.tolist()} for {k} score columns")
    n = labels.size
    return float(sum(counts[c] / n * auc_binary(scores[:, c], labels == c) for c in range(k)))


def evaluation_auc(probabilities, labels) -> float:
    """AUC as used for model evaluation: binary when ``probabilities`` is a
    vector of positive-class probabilities, weighted one-vs-rest otherwise."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if probabilities.ndim == 1:
        return auc_binary(probabilities, labels)
    return auc_weighted(probabilities, labels)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ShapeError("need at least two entries")
    return a, b


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return 0.0
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


def spearman_rho(a, b) -> float:
    """Pearson correlation of average ranks. A constant input gives 0."""
    a, b = _pair(a, b)
    return _pearson(rankdata(a), rankdata(b))


def cosine(a, b, with_flag: bool = False):
    """Cosine similarity. A zero vector yields 0; ``with_flag`` additionally
    returns whether that degenerate case occurred."""
    a, b = _pair(a, b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    degenerate = bool(na == 0.0 or nb == 0.0)
    value = 0.0 if degenerate else float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    if degenerate:
        logger.debug("cosine of a zero vector defined as 0")
    return (value, degenerate) if with_flag else value
