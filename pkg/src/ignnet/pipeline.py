"""End-to-end pipeline: load, split, preprocess, build the graph, train."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .config import architecture_from, training_from
from .data import TabularDataset, fit_preprocessor, load_first_available, oversample_minority, split_dataset
from .data.preprocess import Preprocessor
from .graph import FeatureGraph, build_graph, calibrate_self_loop, pearson_matrix
from .metrics import evaluation_auc
from .model import ArchitectureConfig, IgnnetModel
from .training import TrainConfig, TrainReport, train

logger = logging.getLogger(__name__)


@dataclass
class PreparedData:
    dataset: TabularDataset
    preprocessor: Preprocessor
    x: dict[str, np.ndarray]
    y: dict[str, np.ndarray]
    x_fit: np.ndarray  # training rows after oversampling
    y_fit: np.ndarray
    correlation: np.ndarray
    reports: dict = field(default_factory=dict)

    @property
    def node_names(self) -> list[str]:
        return self.preprocessor.node_names

    @property
    def train_mean(self) -> np.ndarray:
        return self.x["train"].mean(axis=0)


@dataclass
class RunResult:
    model: IgnnetModel
    report: TrainReport
    data: PreparedData
    scores: dict[str, float]


def prepare(dataset: TabularDataset, split_cfg: dict, oversample: bool = True, seed: int = 0) -> PreparedData:
    """Split, fit the preprocessor on the training split, transform every
    split and compute training correlations (before oversampling)."""
    ds = split_dataset(dataset, split_cfg.get("fractions", (0.6, 0.2, 0.2)), split_cfg.get("seed", 42),
                       split_cfg.get("sizes"))
    pre = fit_preprocessor(ds)
    x, y, reports = {}, {}, {}
    for part in ("train", "dev", "test"):
        rows = ds.indices(part)
        x[part], report = pre.transform_with_report(ds.take(rows))
        y[part] = ds.labels[rows]
        reports[part] = report.to_dict()
    x_fit, y_fit = x["train"], y["train"]
    if oversample:
        x_fit, y_fit = oversample_minority(x_fit, y_fit, seed=seed, n_classes=ds.n_classes)
    return PreparedData(ds, pre, x, y, x_fit, y_fit, pearson_matrix(x["train"]), reports)


def make_graph(data: PreparedData, graph_cfg: dict) -> FeatureGraph:
    primary = graph_cfg.get("primary_threshold", 0.2)
    fallback = graph_cfg.get("fallback_threshold", 0.05)
    delta = graph_cfg.get("self_loop", "auto")
    if delta == "auto":
        delta = calibrate_self_loop(data.correlation, primary=primary, fallback=fallback)
    return build_graph(data.correlation, data.node_names, float(delta), primary, fallback,
                       graph_cfg.get("allow_isolated", False))


def fit(data: PreparedData, graph: FeatureGraph, arch: ArchitectureConfig, train_cfg: TrainConfig,
        metadata: Optional[dict] = None) -> RunResult:
    params, report = train(data.x_fit, data.y_fit, data.x["dev"], data.y["dev"], graph.normalized,
                           arch, train_cfg)
    model = IgnnetModel(arch, params, graph, data.preprocessor, data.dataset.schema, dict(metadata or {}))
    scores = {part: float(evaluation_auc(model.predict_proba(data.x[part]), data.y[part])) for part in ("dev", "test")}
    model.metadata.update({
        "train_seed": train_cfg.seed,
        "epochs_run": len(report.epochs),
        "best_epoch": report.best_epoch,
        "dev_auc": scores["dev"],
        "test_auc": scores["test"],
    })
    return RunResult(model, report, data, scores)


def load_dataset(config: dict, cache_dir: Optional[Union[str, Path]] = None) -> TabularDataset:
    return load_first_available(config["dataset"]["sources"], cache_dir, config["dataset"].get("target"))


def run(config: dict, cache_dir: Optional[Union[str, Path]] = None,
        dataset: Optional[TabularDataset] = None) -> RunResult:
    """Execute a resolved run configuration (see :mod:`ignnet.config`)."""
    dataset = dataset if dataset is not None else load_dataset(config, cache_dir)
    train_cfg = training_from(config)
    data = prepare(dataset, config["split"], config["oversample"], seed=train_cfg.seed)
    graph = make_graph(data, config["graph"])
    arch = architecture_from(config, dataset.n_classes)
    logger.info("%s: %d nodes, %d edges, self-loop %g", dataset.name, graph.n_nodes, graph.n_edges, graph.self_loop)
    metadata = {
        "run": config.get("name"),
        "dataset": dataset.name,
        "provenance": dataset.provenance,
        "split": config["split"],
        "graph": {k: config["graph"][k] for k in sorted(config["graph"])},
    }
    return fit(data, graph, arch, train_cfg, metadata)
