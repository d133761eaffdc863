"""Feature graphs: correlation edges, self-loops and symmetric normalization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegreeError, SampleSizeError

logger = logging.getLogger(__name__)

PRIMARY_THRESHOLD = 0.2
FALLBACK_THRESHOLD = 0.05
SELF_LOOP_GRID = (1, 2, 3, 4, 10, 15, 20, 30, 40, 50, 60, 80, 400)
TARGET_MASS = (0.70, 0.90)


def pearson_matrix(x: np.ndarray) -> np.ndarray:
    """Pearson correlations between the columns of ``x``.

    Constant columns correlate 0 with everything else and 1 with themselves.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise SampleSizeError("correlation needs at least 2 rows")
    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    constant = norms == 0
    safe = np.where(constant, 1.0, norms)
    z = centered / safe
    corr = np.clip(z.T @ z, -1.0, 1.0)
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    np.fill_diagonal(corr, 1.0)
    return (corr + corr.T) / 2


@dataclass
class FeatureGraph:
    node_names: list[str]
    adjacency: np.ndarray  # raw A with the self-loop weight on the diagonal
    normalized: np.ndarray  # D^-1/2 A D^-1/2
    self_loop: float
    threshold: Optional[float]
    primary_threshold: Optional[float] = PRIMARY_THRESHOLD
    fallback_threshold: Optional[float] = FALLBACK_THRESHOLD
    fallback_used: bool = False
    null_graph: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        """Non-zero entries of A, self-loops included."""
        return int(np.count_nonzero(self.adjacency))

    def self_loop_mass(self) -> float:
        return self_loop_mass(self.normalized)

    def to_dict(self) -> dict:
        return {
            "node_names": self.node_names,
            "adjacency": self.adjacency.tolist(),
            "normalized": self.normalized.tolist(),
            "self_loop": self.self_loop,
            "threshold": self.threshold,
            "primary_threshold": self.primary_threshold,
            "fallback_threshold": self.fallback_threshold,
            "fallback_used": self.fallback_used,
            "null_graph": self.null_graph,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureGraph":
        return cls(
            list(d["node_names"]), np.array(d["adjacency"], dtype=np.float64),
            np.array(d["normalized"], dtype=np.float64), d["self_loop"], d["threshold"],
            d.get("primary_threshold"), d.get("fallback_threshold"),
            d["fallback_used"], d["null_graph"], list(d.get("notes", [])),
        )


def select_threshold(corr: np.ndarray, primary: Optional[float] = PRIMARY_THRESHOLD,
                     fallback: Optional[float] = FALLBACK_THRESHOLD) -> tuple[Optional[float], bool]:
    """Active threshold and whether the fallback was needed.

    The fallback applies only when no off-diagonal |corr| reaches the primary
    threshold. ``primary=None`` disables thresholding.
    """
    if primary is None:
        return None, False
    off = np.abs(corr[~np.eye(len(corr), dtype=bool)])
    if off.size and off.max() >= primary:
        return primary, False
    if fallback is None:
        return primary, False
    return fallback, True


def build_adjacency(corr: np.ndarray, self_loop: float, primary: Optional[float] = PRIMARY_THRESHOLD,
                    fallback: Optional[float] = FALLBACK_THRESHOLD) -> tuple[np.ndarray, Optional[float], bool, bool]:
    """Raw adjacency: signed correlations at or above the active threshold off
    the diagonal, ``self_loop`` on it.

    Returns ``(A, threshold, fallback_used, null_graph)``.
    """
    if self_loop < 0:
        raise ValueError("self-loop weight must be non-negative")
    corr = np.asarray(corr, dtype=np.float64)
    threshold, used_fallback = select_threshold(corr, primary, fallback)
    a = corr.copy()
    if threshold is not None:
        a[np.abs(a) < threshold] = 0.0
    np.fill_diagonal(a, self_loop)
    off_edges = np.count_nonzero(a) - np.count_nonzero(np.diag(a))
    return a, threshold, used_fallback, off_edges == 0


def normalize_adjacency(a: np.ndarray, allow_isolated: bool = False) -> np.ndarray:
    """``D^-1/2 A D^-1/2`` with ``D_ii = sum_j A_ij``.

    Non-positive degrees raise :class:`DegreeError`, except that with
    ``allow_isolated`` such nodes get an all-zero row and column.
    """
    a = np.asarray(a, dtype=np.float64)
    degree = a.sum(axis=1)
    bad = np.flatnonzero(degree <= 0)
    if bad.size and not allow_isolated:
        raise DegreeError(f"node {bad[0]} has non-positive degree {degree[bad[0]]:.6g}", int(bad[0]))
    # A_ij / sqrt(D_ii D_jj) is exactly symmetric when A is
    scale = np.sqrt(np.outer(np.maximum(degree, 0), np.maximum(degree, 0)))
    ok = np.outer(degree > 0, degree > 0)
    return np.divide(a, scale, out=np.zeros_like(a), where=ok)


def self_loop_mass(normalized: np.ndarray) -> float:
    """Average over nodes of |diagonal| / sum of |row| in the normalized
    adjacency. Rows that are entirely zero are skipped."""
    absolute = np.abs(normalized)
    totals = absolute.sum(axis=1)
    keep = totals > 0
    return float((np.diag(absolute)[keep] / totals[keep]).mean())


def build_graph(corr: np.ndarray, node_names: Sequence[str], self_loop: float,
                primary: Optional[float] = PRIMARY_THRESHOLD, fallback: Optional[float] = FALLBACK_THRESHOLD,
                allow_isolated: bool = False) -> FeatureGraph:
    """Adjacency plus normalization. If strong negative edges leave a node
    with a non-positive degree, the self-loop weight is doubled until every
    degree is positive (logged and recorded in ``notes``)."""
    notes = []
    delta = float(self_loop)
    while True:
        a, threshold, used_fallback, null = build_adjacency(corr, delta, primary, fallback)
        degree = a.sum(axis=1)
        if allow_isolated or (degree > 0).all():
            break
        if delta <= 0:
            raise DegreeError("self-loop weight 0 leaves nodes without positive degree",
                              int(np.flatnonzero(degree <= 0)[0]))
        notes.append(f"self-loop raised from {delta:g} to {2 * delta:g}: non-positive degree")
        logger.warning(notes[-1])
        delta *= 2
    if null:
        notes.append("no edge passed the threshold: self-loop-only graph")
    return FeatureGraph(list(node_names), a, normalize_adjacency(a, allow_isolated), delta,
                        threshold, primary, fallback, used_fallback, null, notes)


def mass_for(corr: np.ndarray, self_loop: float, primary=PRIMARY_THRESHOLD, fallback=FALLBACK_THRESHOLD) -> float:
    a, *_ = build_adjacency(corr, self_loop, primary, fallback)
    return self_loop_mass(normalize_adjacency(a, allow_isolated=True))


def calibrate_self_loop(corr: np.ndarray, grid: Sequence[float] = SELF_LOOP_GRID,
                        target: tuple[float, float] = TARGET_MASS, primary=PRIMARY_THRESHOLD,
                        fallback=FALLBACK_THRESHOLD) -> float:
    """Smallest grid weight whose average self-loop mass lands in ``target``.

    When no grid value lands inside, the one closest to the interval wins.
    """
    lo, hi = target
    best, best_gap = None, np.inf
    for delta in sorted(grid):
        mass = mass_for(corr, delta, primary, fallback)
        if lo <= mass <= hi:
            return float(delta)
        gap = lo - mass if mass < lo else mass - hi
        if gap < best_gap:
            best, best_gap = float(delta), gap
    logger.info("no self-loop weight reaches mass in %s; using %g", target, best)
    return best


def above_target_self_loop(corr: np.ndarray, grid: Sequence[float] = SELF_LOOP_GRID,
                           limit: float = TARGET_MASS[1], primary=PRIMARY_THRESHOLD,
                           fallback=FALLBACK_THRESHOLD) -> float:
    """Smallest grid weight whose self-loop mass exceeds ``limit``."""
    for delta in sorted(grid):
        if mass_for(corr, delta, primary, fallback) > limit:
            return float(delta)
    return float(max(grid))
