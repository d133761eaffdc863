"""Minibatch training with dev-AUC early stopping."""

from __future__ import annotations

import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import AdamState, Tape, Var, adam_step, run_backward
from .errors import ConfigurationError, EvaluationError, LabelError, UndefinedAUCError
from .metrics import evaluation_auc
from .model import ArchitectureConfig, IgnnetParams, forward, init_params

logger = logging.getLogger(__name__)

STOP_PATIENCE = "patience"
STOP_MAX_EPOCHS = "max-epochs"


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    patience: int = 20
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clamp: float = 1e-12
    progress: bool = False  # per-epoch lines on stderr

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be at least 1")
        if self.patience < 1:
            raise ConfigurationError("patience must be at least 1")
        if self.batch_size < 2:
            raise ConfigurationError("batch size must be at least 2 for batch norm")
        if not (self.lr > 0 and self.eps > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("invalid optimizer hyperparameters")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_auc: float
    seconds: float = field(default=0.0, compare=False)


@dataclass
class TrainReport:
    """Per-epoch history. Equality ignores wall-clock timings."""

    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_auc: float = float("-inf")
    stop_reason: str = STOP_MAX_EPOCHS

    def to_dict(self) -> dict:
        return {
            "epochs": [asdict(r) for r in self.epochs],
            "best_epoch": self.best_epoch,
            "best_dev_auc": self.best_dev_auc,
            "stop_reason": self.stop_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        return cls([EpochRecord(**r) for r in d["epochs"]], d["best_epoch"], d["best_dev_auc"], d["stop_reason"])


class EarlyStopping:
    """Tracks the best metric; ``step`` returns True when patience runs out."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigurationError("patience must be at least 1")
        self.patience = patience
        self.best = float("-inf")
        self.best_epoch = 0
        self.bad = 0

    def improved(self, value: float) -> bool:
        return value > self.best

    def step(self, value: float, epoch: int) -> bool:
        if self.improved(value):
            self.best, self.best_epoch, self.bad = value, epoch, 0
            return False
        self.bad += 1
        return self.bad >= self.patience


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes or not np.all(labels == np.round(labels))):
        raise LabelError(f"labels must be integers in [0, {n_classes - 1}]")
    return labels.astype(np.int64)


def cross_entropy_loss(prediction, labels, clamp: float = 1e-12) -> float:
    """Mean cross-entropy of positive-class probabilities (vector) or class
    probability rows (matrix), probabilities clamped at ``clamp``."""
    p = np.asarray(prediction, dtype=np.float64)
    if p.ndim == 0:
        p = p[None]
    labels = np.atleast_1d(np.asarray(labels))
    if p.ndim == 1:
        y = _check_labels(labels, 2).astype(np.float64)
        pc = np.clip(p, clamp, 1.0 - clamp)
        return float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))))
    y = _check_labels(labels, p.shape[1])
    return float(np.mean(-np.log(np.maximum(p[np.arange(len(y)), y], clamp))))


def loss_on_tape(tape: Tape, prediction: Var, labels, clamp: float = 1e-12) -> Var:
    """Batch-mean cross-entropy recorded on ``tape``."""
    labels = np.asarray(labels)
    if prediction.value.ndim == 1:
        y = _check_labels(labels, 2).astype(np.float64)
        return tape.mean(tape.binary_cross_entropy(prediction, y, clamp))
    y = _check_labels(labels, prediction.shape[1])
    return tape.mean(tape.nll(prediction, y, clamp))


def batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled minibatch indices. A trailing batch of one row is merged into
    the previous batch so that every batch can be normalized."""
    order = rng.permutation(n)
    parts = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(parts) > 1 and len(parts[-1]) < 2:
        tail = parts.pop()
        parts[-1] = np.concatenate([parts[-1], tail])
    return parts


def predict(params: IgnnetParams, arch: ArchitectureConfig, adjacency: np.ndarray, x: np.ndarray,
            batch_size: int = 1024) -> np.ndarray:
    """Inference-mode predictions."""
    parts = [forward(params, arch, adjacency, x[i:i + batch_size]).prediction for i in range(0, len(x), batch_size)]
    return np.concatenate(parts)


def dev_auc(params: IgnnetParams, arch: ArchitectureConfig, adjacency: np.ndarray, x: np.ndarray,
            y: np.ndarray) -> float:
    try:
        return evaluation_auc(predict(params, arch, adjacency, x), y)
    except UndefinedAUCError as exc:
        raise EvaluationError(f"dev AUC undefined: {exc}") from None


def train(
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_dev: np.ndarray,
    y_dev: np.ndarray,
    adjacency: np.ndarray,
    arch: ArchitectureConfig,
    config: TrainConfig,
    params: Optional[IgnnetParams] = None,
    dev_metric: Optional[Callable[[IgnnetParams, int], float]] = None,
) -> tuple[IgnnetParams, TrainReport]:
    """Train on preprocessed node values and return the checkpoint with the
    best dev AUC together with the per-epoch report.

    ``params`` defaults to a fresh initialization under ``config.seed``.
    ``dev_metric(params, epoch)`` replaces the dev AUC computation.
    """
    config.validate()
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = _check_labels(y_train, arch.n_classes)
    y_dev = _check_labels(y_dev, arch.n_classes)
    if len(x_train) < 2 or len(x_dev) == 0:
        raise ConfigurationError("training needs at least 2 train rows and a non-empty dev split")
    if dev_metric is None and len(np.unique(y_dev)) < 2:
        raise EvaluationError("dev AUC undefined: dev split holds a single class")
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if params is None:
        params = init_params(arch, adjacency.shape[0], config.seed)
    params = params.copy()
    adam = AdamState(config.lr, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopping(config.patience)
    report = TrainReport()
    best = params.copy()

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        total, seen = 0.0, 0
        for idx in batches(len(x_train), config.batch_size, rng):
            tape = Tape()
            out = forward(params, arch, adjacency, x_train[idx], training=True, tape=tape)
            loss = loss_on_tape(tape, out.output, y_train[idx], config.clamp)
            grads = run_backward(tape, loss)
            new, adam = adam_step(params.weights, grads, adam)
            params.replace_weights(new)
            total += float(loss.value) * len(idx)
            seen += len(idx)
        metric = dev_metric(params, epoch) if dev_metric else dev_auc(params, arch, adjacency, x_dev, y_dev)
        if not math.isfinite(metric):
            raise EvaluationError(f"dev metric is not finite at epoch {epoch}")
        record = EpochRecord(epoch, total / seen, float(metric), time.perf_counter() - started)
        report.epochs.append(record)
        if config.progress:
            print(f"epoch {epoch:4d}  loss {record.train_loss:.5f}  dev AUC {record.dev_auc:.5f}", file=sys.stderr)
        if stopper.improved(metric):
            best = params.copy()
        if stopper.step(metric, epoch):
            report.stop_reason = STOP_PATIENCE
            break
    report.best_epoch = stopper.best_epoch
    report.best_dev_auc = stopper.best
    best.set_training(False)
    logger.info("training stopped (%s) after %d epochs; best dev AUC %.4f at epoch %d",
                report.stop_reason, len(report.epochs), report.best_dev_auc, report.best_epoch)
    return best, report
