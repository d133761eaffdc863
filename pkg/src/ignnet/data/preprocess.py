"""One-hot expansion, min-max scaling and minority oversampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from ..errors import ClassCoverageError, SchemaError
from .dataset import TabularDataset

logger = logging.getLogger(__name__)


@dataclass
class Block:
    """Node range ``[start, stop)`` produced by one original column."""

    column: str
    kind: str
    start: int
    stop: int
    vocabulary: list[str] = field(default_factory=list)
    minimum: float = 0.0
    maximum: float = 0.0
    mean: float = 0.0


@dataclass
class TransformReport:
    rows: int = 0
    imputed: dict[str, int] = field(default_factory=dict)
    unseen: dict[str, dict[str, int]] = field(default_factory=dict)
    missing_categorical: dict[str, int] = field(default_factory=dict)
    clamped: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "imputed": self.imputed,
            "unseen": self.unseen,
            "missing_categorical": self.missing_categorical,
            "clamped": self.clamped,
        }


@dataclass
class Preprocessor:
    """Maps raw columns to node values in [0, 1].

    Numeric columns become one node scaled by the training min and max
    (missing values take the training mean first). Categorical columns become
    one indicator node per vocabulary entry.
    """

    blocks: list[Block]

    @property
    def n_nodes(self) -> int:
        return self.blocks[-1].stop if self.blocks else 0

    @property
    def node_names(self) -> list[str]:
        names = []
        for b in self.blocks:
            if b.kind == "numeric":
                names.append(b.column)
            else:
                names.extend(f"{b.column}={v}" for v in b.vocabulary)
        return names

    def transform(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        return self.transform_with_report(columns)[0]

    def transform_with_report(self, columns: Mapping[str, np.ndarray]) -> tuple[np.ndarray, TransformReport]:
        n = len(next(iter(columns.values())))
        out = np.zeros((n, self.n_nodes))
        report = TransformReport(rows=n)
        for b in self.blocks:
            if b.column not in columns:
                raise SchemaError(f"column {b.column!r} missing from input")
            col = columns[b.column]
            if b.kind == "numeric":
                values = np.asarray(col, dtype=np.float64).copy()
                missing = np.isnan(values)
                if missing.any():
                    values[missing] = b.mean
                    report.imputed[b.column] = int(missing.sum())
                span = b.maximum - b.minimum
                scaled = (values - b.minimum) / span if span > 0 else np.zeros(n)
                outside = (scaled < 0) | (scaled > 1)
                if outside.any():
                    report.clamped[b.column] = int(outside.sum())
                out[:, b.start] = np.clip(scaled, 0.0, 1.0)
            else:
                lookup = {v: i for i, v in enumerate(b.vocabulary)}
                for r, v in enumerate(col):
                    if v is None:
                        report.missing_categorical[b.column] = report.missing_categorical.get(b.column, 0) + 1
                        continue
                    k = lookup.get(v)
                    if k is None:
                        counts = report.unseen.setdefault(b.column, {})
                        counts[v] = counts.get(v, 0) + 1
                        continue
                    out[r, b.start + k] = 1.0
        return out, report

    def inverse_numeric(self, nodes: np.ndarray) -> dict[str, np.ndarray]:
        """Undo min-max scaling of the numeric nodes."""
        return {
            b.column: nodes[:, b.start] * (b.maximum - b.minimum) + b.minimum
            for b in self.blocks if b.kind == "numeric"
        }

    def block_of(self, node: int) -> Block:
        for b in self.blocks:
            if b.start <= node < b.stop:
                return b
        raise IndexError(node)

    def to_dict(self) -> dict:
        return {"blocks": [b.__dict__ for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        return cls([Block(**b) for b in d["blocks"]])


def fit_preprocessor(dataset: TabularDataset) -> Preprocessor:
    """Fit scaling statistics on the training split only.

    Categorical blocks use the schema vocabulary, so categories declared for
    the dataset but absent from training still get (always-zero) nodes.
    """
    rows = dataset.indices("train")
    blocks: list[Block] = []
    start = 0
    for spec in dataset.schema.features:
        col = dataset.columns[spec.name]
        if spec.kind == "numeric":
            values = np.asarray(col[rows], dtype=np.float64)
            present = values[~np.isnan(values)]
            if present.size == 0:
                lo = hi = mean = 0.0
            else:
                lo, hi, mean = float(present.min()), float(present.max()), float(present.mean())
            blocks.append(Block(spec.name, "numeric", start, start + 1, minimum=lo, maximum=hi, mean=mean))
            start += 1
        else:
            vocab = list(dataset.schema.vocabularies[spec.name])
            train_values = {v for v in col[rows] if v is not None}
            unknown = train_values - set(vocab)
            if unknown:
                raise SchemaError(f"training values {sorted(unknown)} missing from vocabulary of {spec.name!r}")
            blocks.append(Block(spec.name, "categorical", start, start + len(vocab), vocabulary=vocab))
            start += len(vocab)
    return Preprocessor(blocks)


def oversample_minority(x: np.ndarray, y: np.ndarray, seed: int = 0,
                        n_classes: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Duplicate random minority rows (with replacement) until both classes
    have equal counts. Inputs with more than two classes are returned as is.

    The original rows come first, the duplicates are appended.
    """
    y = np.asarray(y)
    present = np.unique(y)
    if present.size < 2:
        raise ClassCoverageError(f"oversampling needs two classes, found {present.tolist()}")
    if present.size > 2 or (n_classes is not None and n_classes > 2):
        return x, y
    counts = {c: int((y == c).sum()) for c in present}
    minority = min(counts, key=lambda c: (counts[c], c))
    deficit = max(counts.values()) - counts[minority]
    if deficit == 0:
        return x, y
    rng = np.random.default_rng(seed)
    extra = rng.choice(np.flatnonzero(y == minority), size=deficit, replace=True)
    logger.info("oversampling class %s: +%d rows", minority, deficit)
    return np.concatenate([x, x[extra]]), np.concatenate([y, y[extra]])
