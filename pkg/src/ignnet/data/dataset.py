"""Tabular datasets: schema inference, CSV/ARFF loading and splitting."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ..errors import ConfigurationError, FormatError, RowError, SchemaError

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "?"})
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "numeric" | "categorical" | "target"


@dataclass
class DatasetSchema:
    columns: list[ColumnSpec]
    vocabularies: dict[str, list[str]]
    classes: list[str]

    def __post_init__(self):
        targets = [c for c in self.columns if c.kind == "target"]
        if len(targets) != 1:
            raise SchemaError(f"schema needs exactly one target column, found {len(targets)}")
        for name, vocab in self.vocabularies.items():
            if len(set(vocab)) != len(vocab):
                raise SchemaError(f"vocabulary of {name!r} has duplicates")

    @property
    def target(self) -> str:
        return next(c.name for c in self.columns if c.kind == "target")

    @property
    def features(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.kind != "target"]

    def to_dict(self) -> dict:
        return {
            "columns": [[c.name, c.kind] for c in self.columns],
            "vocabularies": self.vocabularies,
            "classes": self.classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        return cls([ColumnSpec(n, k) for n, k in d["columns"]], {k: list(v) for k, v in d["vocabularies"].items()}, list(d["classes"]))


@dataclass
class TabularDataset:
    """Column store for one classification dataset.

    Numeric columns are float arrays with NaN for missing entries,
    categorical columns are object arrays of strings with None for missing.
    ``split`` is None until :func:`split_dataset` assigns train/dev/test.
    """

    schema: DatasetSchema
    columns: dict[str, np.ndarray]
    labels: np.ndarray
    split: Optional[np.ndarray] = None
    name: str = "dataset"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.labels)
        for name, col in self.columns.items():
            if len(col) != n:
                raise SchemaError(f"column {name!r} has {len(col)} rows, labels have {n}")
        if self.split is not None and len(self.split) != n:
            raise SchemaError("split tags do not cover every row")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.schema.classes)

    def indices(self, part: str) -> np.ndarray:
        if self.split is None:
            raise ConfigurationError("dataset has not been split")
        if part not in SPLITS:
            raise ConfigurationError(f"unknown split {part!r}")
        return np.flatnonzero(self.split == part)

    def take(self, rows: Sequence[int]) -> dict[str, np.ndarray]:
        rows = np.asarray(rows, dtype=np.int64)
        return {name: col[rows] for name, col in self.columns.items()}


def _is_real(token: str) -> bool:
    try:
        return math.isfinite(float(token))
    except ValueError:
        return False


def _build(names: list[str], raw_rows: list[list[str]], target: str, name: str,
           line_numbers: list[int]) -> TabularDataset:
    t = names.index(target)
    kinds: list[str] = []
    columns: dict[str, np.ndarray] = {}
    vocabularies: dict[str, list[str]] = {}
    for j, col in enumerate(names):
        if j == t:
            kinds.append("target")
            continue
        values = [r[j].strip() for r in raw_rows]
        present = [v for v in values if v not in MISSING_TOKENS]
        if all(_is_real(v) for v in present):
            kinds.append("numeric")
            columns[col] = np.array([float(v) if v not in MISSING_TOKENS else np.nan for v in values])
        else:
            kinds.append("categorical")
            vocabularies[col] = list(dict.fromkeys(present))
            columns[col] = np.array([v if v not in MISSING_TOKENS else None for v in values], dtype=object)

    classes: list[str] = []
    index: dict[str, int] = {}
    labels = np.empty(len(raw_rows), dtype=np.int64)
    for i, r in enumerate(raw_rows):
        v = r[t].strip()
        if v in MISSING_TOKENS:
            raise RowError(f"missing target value in column {target!r}", line_numbers[i])
        if v not in index:
            index[v] = len(classes)
            classes.append(v)
        labels[i] = index[v]

    schema = DatasetSchema([ColumnSpec(c, k) for c, k in zip(names, kinds)], vocabularies, classes)
    return TabularDataset(schema, columns, labels, name=name)


def load_csv(path: Union[str, Path], target: str, name: Optional[str] = None) -> TabularDataset:
    """Read a header-first UTF-8 CSV file.

    A column is numeric iff every non-missing entry (missing: empty or ``?``)
    parses as a finite real. Class labels are numbered in order of first
    appearance.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_csv(text, target, name or path.stem)


def parse_csv(text: str, target: str, name: str = "dataset") -> TabularDataset:
    if not text.strip():
        raise FormatError("empty CSV input")
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except csv.Error as exc:
        raise RowError(str(exc), 1) from None
    if target not in header:
        raise SchemaError(f"target column {target!r} not in header {header}")
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    rows: list[list[str]] = []
    lines: list[int] = []
    try:
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RowError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            rows.append(row)
            lines.append(reader.line_num)
    except csv.Error as exc:
        raise RowError(str(exc), reader.line_num) from None
    if not rows:
        raise FormatError("CSV input has a header but no data rows")
    return _build(header, rows, target, name, lines)


def load_arff(path: Union[str, Path], target: str, name: Optional[str] = None) -> TabularDataset:
    """Read a dense ARFF file (numeric and nominal attributes).

    Nominal attributes keep their declared value order as vocabulary and
    class order.
    """
    from scipy.io import arff

    path = Path(path)
    try:
        data, meta = arff.loadarff(str(path))
    except (ValueError, NotImplementedError, arff.ParseArffError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    names = list(meta.names())
    if target not in names:
        raise SchemaError(f"target attribute {target!r} not in {path.name}")

    def decode(v) -> Optional[str]:
        s = v.decode("utf-8") if isinstance(v, bytes) else str(v)
        return None if s in MISSING_TOKENS else s

    columns: dict[str, np.ndarray] = {}
    vocabularies: dict[str, list[str]] = {}
    specs: list[ColumnSpec] = []
    classes: list[str] = []
    labels = None
    for col in names:
        kind, declared = meta[col]
        if col == target:
            if kind != "nominal":
                raise SchemaError(f"target {target!r} must be nominal, is {kind}")
            classes = list(declared)
            values = [decode(v) for v in data[col]]
            if any(v is None for v in values):
                raise FormatError(f"missing target values in {path.name}")
            lookup = {c: i for i, c in enumerate(classes)}
            labels = np.array([lookup[v] for v in values], dtype=np.int64)
            specs.append(ColumnSpec(col, "target"))
        elif kind == "numeric":
            columns[col] = np.asarray(data[col], dtype=np.float64)
            specs.append(ColumnSpec(col, "numeric"))
        elif kind == "nominal":
            vocabularies[col] = list(declared)
            columns[col] = np.array([decode(v) for v in data[col]], dtype=object)
            specs.append(ColumnSpec(col, "categorical"))
        else:
            raise FormatError(f"unsupported ARFF attribute type {kind!r} for {col!r}")
    schema = DatasetSchema(specs, vocabularies, classes)
    return TabularDataset(schema, columns, labels, name=name or path.stem)


def from_arrays(features: np.ndarray, labels: Iterable, feature_names: Optional[list[str]] = None,
                classes: Optional[list[str]] = None, name: str = "dataset") -> TabularDataset:
    """Wrap an all-numeric feature matrix and integer labels."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    names = feature_names or [f"x{j + 1}" for j in range(features.shape[1])]
    classes = classes or [str(c) for c in range(int(labels.max()) + 1)]
    specs = [ColumnSpec(n, "numeric") for n in names] + [ColumnSpec("class", "target")]
    columns = {n: features[:, j].copy() for j, n in enumerate(names)}
    return TabularDataset(DatasetSchema(specs, {}, classes), columns, labels, name=name)


def _largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    quotas = [n * f for f in fractions]
    sizes = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(dataset: TabularDataset, fractions: Sequence[float] = (0.6, 0.2, 0.2),
                  seed: int = 42, sizes: Optional[Sequence[int]] = None) -> TabularDataset:
    """Tag every row train/dev/test after a seeded shuffle.

    Split sizes come from ``fractions`` by largest-remainder rounding (ties to
    the earlier split) unless explicit ``sizes`` are given.
    """
    n = len(dataset)
    if sizes is None:
        if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must be three positives summing to 1, got {list(fractions)}")
        sizes = _largest_remainder(n, fractions)
    else:
        sizes = [int(s) for s in sizes]
        if len(sizes) != 3 or sum(sizes) != n:
            raise ConfigurationError(f"split sizes {sizes} do not add up to {n} rows")
    if min(sizes) <= 0:
        raise ConfigurationError(f"split sizes {sizes} leave an empty split")
    order = np.random.default_rng(seed).permutation(n)
    tags = np.empty(n, dtype="<U5")
    start = 0
    for part, size in zip(SPLITS, sizes):
        tags[order[start:start + size]] = part
        start += size
    return TabularDataset(dataset.schema, dataset.columns, dataset.labels, tags, dataset.name,
                          dict(dataset.provenance))
