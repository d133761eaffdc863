"""IGNNet: message passing over a feature graph with an additive readout.

Each instance is a graph whose nodes are the (one-hot expanded) features.
Node values are embedded, mixed along correlation edges by the message
passing stack, mapped to one scalar per node by a linear feed-forward
readout followed by a sigmoid, and combined by a white-box output layer::

    logit = sum_i w_i * g_i + b,   prediction = link(logit)

The opaque variant replaces readout and output layer with an MLP over the
concatenated node representations.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .autodiff import BatchNormState, Tape, Var, batch_norm
from .autodiff.tape import as_tensor
from .data.dataset import DatasetSchema
from .data.preprocess import Preprocessor
from .errors import ConfigurationError, IntegrityError, NumericError, ShapeError, UnsupportedVersionError
from .graph import FeatureGraph

logger = logging.getLogger(__name__)

MODEL_FORMAT = "ignnet-model/1"
HEADS = ("interpretable", "opaque")


@dataclass(frozen=True)
class ArchitectureConfig:
    """Layer layout.

    ``bn_after`` lists (1-based) message-passing layers followed by a batch
    norm and a node-wise linear+relu transform; the first such transform
    widens to the next layer's width. ``residual`` lists layers whose input is
    added to their output.
    """

    n_classes: int = 2
    embed_dim: int = 64
    mp_widths: tuple = (64, 64, 64, 128, 128, 128)
    bn_after: tuple = (3, 4, 6)
    residual: tuple = (2, 3, 5, 6)
    readout_widths: tuple = (128, 64, 32, 16, 8, 4, 2, 1)
    readout_bn_after: tuple = (2, 4, 6)
    head: str = "interpretable"
    opaque_hidden: int = 1024
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    @classmethod
    def with_layers(cls, layers: int, **kwargs) -> "ArchitectureConfig":
        """Default (6), reduced (3) and single-layer (1) stacks. The reduced
        stacks keep the first layers up to and including the first batch norm
        and its node-wise transform."""
        layouts = {
            6: dict(mp_widths=(64, 64, 64, 128, 128, 128), bn_after=(3, 4, 6), residual=(2, 3, 5, 6)),
            3: dict(mp_widths=(64, 64, 64), bn_after=(3,), residual=(2, 3)),
            1: dict(mp_widths=(64,), bn_after=(1,), residual=()),
        }
        if layers not in layouts:
            raise ConfigurationError(f"supported layer counts are 6, 3 and 1, got {layers}")
        return cls(**{**layouts[layers], **kwargs})

    @property
    def n_layers(self) -> int:
        return len(self.mp_widths)

    @property
    def n_outputs(self) -> int:
        return 1 if self.n_classes == 2 else self.n_classes

    def layer_shapes(self) -> list[tuple[int, int, Optional[int]]]:
        """(input width, output width, node-transform output width or None)."""
        shapes = []
        width = self.embed_dim
        for l, out in enumerate(self.mp_widths, start=1):
            transform = None
            if l in self.bn_after:
                transform = self.mp_widths[l] if l < self.n_layers else self.readout_widths[0]
            shapes.append((width, out, transform))
            width = transform if transform is not None else out
        return shapes

    def validate(self) -> None:
        if self.n_classes < 2:
            raise ConfigurationError("need at least two classes")
        if self.head not in HEADS:
            raise ConfigurationError(f"head must be one of {HEADS}")
        if not self.mp_widths:
            raise ConfigurationError("need at least one message-passing layer")
        if self.readout_widths[-1] != 1:
            raise ConfigurationError("readout must end in width 1")
        for l in (*self.bn_after, *self.residual):
            if not 1 <= l <= self.n_layers:
                raise ConfigurationError(f"layer index {l} out of range")
        final = self.embed_dim
        for l, (w_in, w_out, transform) in enumerate(self.layer_shapes(), start=1):
            if l in self.residual and w_in != w_out:
                raise ConfigurationError(f"residual around layer {l} needs equal widths, got {w_in}->{w_out}")
            final = transform if transform is not None else w_out
        if final != self.readout_widths[0]:
            raise ConfigurationError(f"final node width {final} does not match readout input {self.readout_widths[0]}")
        for l in self.readout_bn_after:
            if not 1 <= l < len(self.readout_widths) - 1:
                raise ConfigurationError(f"readout batch-norm position {l} out of range")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass
class IgnnetParams:
    weights: dict[str, np.ndarray]
    bn: dict[str, BatchNormState]

    def __post_init__(self):
        self.weights = {k: v if not v.flags.writeable else _freeze(v) for k, v in self.weights.items()}

    def replace_weights(self, weights: dict[str, np.ndarray]) -> None:
        self.weights = {k: _freeze(v) for k, v in weights.items()}

    def set_training(self, training: bool) -> None:
        for state in self.bn.values():
            state.training = training

    def copy(self) -> "IgnnetParams":
        return IgnnetParams(dict(self.weights), {k: s.copy() for k, s in self.bn.items()})

    @property
    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.weights.values()))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: ArchitectureConfig, n_nodes: int, seed: int = 0) -> IgnnetParams:
    """Glorot-uniform weights, zero biases, batch norms at scale 1 / shift 0."""
    config.validate()
    if n_nodes < 1:
        raise ConfigurationError("need at least one node")
    rng = np.random.default_rng(seed)
    w: dict[str, np.ndarray] = {}
    bn: dict[str, BatchNormState] = {}

    def linear(name, d_in, d_out, bias=True):
        w[f"{name}.weight"] = _glorot(rng, d_in, d_out, (d_in, d_out))
        if bias:
            w[f"{name}.bias"] = np.zeros(d_out)

    def norm(name, channels):
        w[f"{name}.scale"] = np.ones(channels)
        w[f"{name}.shift"] = np.zeros(channels)
        bn[name] = BatchNormState.fresh(channels, config.bn_momentum, config.bn_eps)

    linear("embed", 1, config.embed_dim)
    for l, (w_in, w_out, transform) in enumerate(config.layer_shapes(), start=1):
        linear(f"mp{l}", w_in, w_out, bias=False)
        if transform is not None:
            norm(f"bn{l}", w_out)
            linear(f"node{l}", w_out, transform)

    if config.head == "interpretable":
        widths = config.readout_widths
        for j in range(1, len(widths)):
            linear(f"readout{j}", widths[j - 1], widths[j])
            if j in config.readout_bn_after:
                norm(f"readout_bn{j}", widths[j])
        k = config.n_outputs
        shape = (n_nodes,) if k == 1 else (k, n_nodes)
        w["head.weight"] = _glorot(rng, n_nodes, k, shape)
        w["head.bias"] = np.zeros(k)
    else:
        linear("opaque.hidden", n_nodes * config.readout_widths[0], config.opaque_hidden)
        linear("opaque.out", config.opaque_hidden, config.n_outputs)
    return IgnnetParams(w, bn)


@dataclass
class ForwardOutput:
    """Result of one forward pass over a batch.

    ``prediction`` holds positive-class probabilities (binary) or class
    probabilities (rows x classes). For the interpretable head ``tau`` holds
    the per-node scores ``w_i * g_i`` (rows x nodes, or rows x classes x
    nodes) and ``logits = exact_sum(tau) + bias``.
    """

    prediction: np.ndarray
    logits: np.ndarray
    node_values: Optional[np.ndarray]
    tau: Optional[np.ndarray]
    bias: Optional[np.ndarray]
    tape: Tape = field(repr=False)
    output: Var = field(repr=False)
    logit_var: Var = field(repr=False)


def message_passing_layer(tape: Tape, h, adjacency, weight, relu: bool = True) -> Var:
    """``relu((A h) W)`` for node representations ``h`` (rows x nodes x d)."""
    h, adjacency, weight = tape._lift(h), tape._lift(adjacency), tape._lift(weight)
    n = adjacency.shape[0]
    if adjacency.shape != (n, n) or h.shape[-2] != n or h.shape[-1] != weight.shape[0]:
        raise ShapeError(f"message passing: A {adjacency.shape}, H {h.shape}, W {weight.shape}")
    out = tape.matmul(tape.matmul(adjacency, h), weight)
    return tape.relu(out) if relu else out


def _linear(tape: Tape, p: dict, name: str, h: Var) -> Var:
    out = tape.matmul(h, p[f"{name}.weight"])
    if f"{name}.bias" in p:
        out = tape.add(out, p[f"{name}.bias"])
    return out


def node_representations(tape: Tape, p: dict, params: IgnnetParams, config: ArchitectureConfig,
                         adjacency: Var, x: Var) -> Var:
    """Embedding and message-passing stack: (rows, nodes) -> (rows, nodes, d)."""
    rows, n = x.shape
    with tape.scope("embed"):
        h = _linear(tape, p, "embed", tape.reshape(x, (rows, n, 1)))
    for l, (_, _, transform) in enumerate(config.layer_shapes(), start=1):
        with tape.scope(f"mp{l}"):
            out = message_passing_layer(tape, h, adjacency, p[f"mp{l}.weight"])
            if l in config.residual:
                out = tape.add(out, h)
            h = out
        if transform is not None:
            with tape.scope(f"bn{l}"):
                h = batch_norm(tape, h, p[f"bn{l}.scale"], p[f"bn{l}.shift"], params.bn[f"bn{l}"])
                h = tape.relu(_linear(tape, p, f"node{l}", h))
    return h


def readout(tape: Tape, p: dict, params: IgnnetParams, config: ArchitectureConfig, h) -> Var:
    """Per-node linear FNN (batch norms included, no other nonlinearity):
    (..., d) -> (..., 1), before the terminal sigmoid."""
    h = tape._lift(h)
    widths = config.readout_widths
    for j in range(1, len(widths)):
        h = _linear(tape, p, f"readout{j}", h)
        if j in config.readout_bn_after:
            h = batch_norm(tape, h, p[f"readout_bn{j}.scale"], p[f"readout_bn{j}.shift"],
                           params.bn[f"readout_bn{j}"])
    return h


def forward(params: IgnnetParams, config: ArchitectureConfig, adjacency: np.ndarray, x: np.ndarray,
            training: bool = False, tape: Optional[Tape] = None) -> ForwardOutput:
    """Run the model on node values ``x`` (rows x nodes, or one row).

    ``training`` switches every batch norm to batch statistics (and updates
    their running statistics); otherwise running statistics are used.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    tape = tape or Tape()
    params.set_training(training)
    # parameters already on the tape (e.g. placed by a gradient checker) are reused
    p = {name: Var(tape, tape.params[name]) if name in tape.params else tape.param(name, value)
         for name, value in params.weights.items()}
    adj = tape.constant(adjacency if not adjacency.flags.writeable else as_tensor(adjacency, "adjacency"))
    n = adj.shape[0]
    if x.shape[1] != n:
        raise ShapeError(f"input has {x.shape[1]} nodes, graph has {n}")
    xv = tape.constant(x, "input")
    h = node_representations(tape, p, params, config, adj, xv)
    rows = x.shape[0]

    if config.head == "opaque":
        with tape.scope("opaque"):
            flat = tape.reshape(h, (rows, n * h.shape[-1]))
            hidden = tape.relu(_linear(tape, p, "opaque.hidden", flat))
            logits = _linear(tape, p, "opaque.out", hidden)
            if config.n_outputs == 1:
                logits = tape.reshape(logits, (rows,))
                out = tape.sigmoid(logits, scalar_path=True)
            else:
                out = tape.softmax(logits)
        return ForwardOutput(out.value, logits.value, None, None, None, tape, out, logits)

    with tape.scope("readout"):
        g = tape.sigmoid(tape.reshape(readout(tape, p, params, config, h), (rows, n)))
    with tape.scope("head"):
        if config.n_outputs == 1:
            tau = tape.mul(g, p["head.weight"])
            logits = tape.add(tape.sum(tau, axis=-1, exact=True), tape.reshape(p["head.bias"], ()))
            out = tape.sigmoid(logits, scalar_path=True)
        else:
            k = config.n_outputs
            tau = tape.mul(tape.reshape(g, (rows, 1, n)), p["head.weight"])
            logits = tape.add(tape.sum(tau, axis=-1, exact=True), p["head.bias"])
            out = tape.softmax(logits)
    bias = params.weights["head.bias"]
    return ForwardOutput(out.value, logits.value, g.value, tau.value,
                         float(bias[0]) if config.n_outputs == 1 else bias.copy(), tape, out, logits)


@dataclass
class IgnnetModel:
    """A trained (or initialized) model together with everything needed to
    apply it to raw data."""

    config: ArchitectureConfig
    params: IgnnetParams
    graph: FeatureGraph
    preprocessor: Optional[Preprocessor] = None
    schema: Optional[DatasetSchema] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._adjacency = _freeze(self.graph.normalized)

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    def forward(self, x, training: bool = False, tape: Optional[Tape] = None) -> ForwardOutput:
        return forward(self.params, self.config, self._adjacency, x, training, tape)

    def predict_proba(self, x, batch_size: int = 1024) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        parts = [self.forward(x[i:i + batch_size]).prediction for i in range(0, len(x), batch_size)]
        return np.concatenate(parts)

    def logits(self, x, batch_size: int = 1024) -> np.ndarray:
        """Pre-link output (binary: rows; multi-class: rows x classes)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        parts = [self.forward(x[i:i + batch_size]).logits for i in range(0, len(x), batch_size)]
        return np.concatenate(parts)


# -- serialization ---------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(v) for v in a.reshape(-1)]}


def _decode_array(d: dict) -> np.ndarray:
    arr = np.array(d["data"], dtype=np.float64).reshape(d["shape"])
    if not np.isfinite(arr).all():
        raise NumericError("model file contains non-finite values")
    return arr


def _body(model: IgnnetModel) -> dict:
    return {
        "config": model.config.to_dict(),
        "weights": {k: _encode_array(v) for k, v in model.params.weights.items()},
        "batch_norm": {
            k: {"running_mean": _encode_array(s.running_mean), "running_var": _encode_array(s.running_var),
                "momentum": s.momentum, "eps": s.eps, "num_batches": s.num_batches}
            for k, s in model.params.bn.items()
        },
        "graph": model.graph.to_dict(),
        "preprocessor": model.preprocessor.to_dict() if model.preprocessor else None,
        "schema": model.schema.to_dict() if model.schema else None,
        "metadata": model.metadata,
    }


def _checksum(body: dict) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def dumps_model(model: IgnnetModel) -> str:
    body = _body(model)
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps({"format": MODEL_FORMAT, "sha256": _checksum(body), **body}, sort_keys=True)


def loads_model(text: str) -> IgnnetModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"model file is truncated or not JSON: {exc}") from None
    fmt = doc.pop("format", None) if isinstance(doc, dict) else None
    if fmt != MODEL_FORMAT:
        raise UnsupportedVersionError(f"unsupported model format {fmt!r}, expected {MODEL_FORMAT!r}")
    digest = doc.pop("sha256", None)
    if digest != _checksum(doc):
        raise IntegrityError("model file checksum mismatch")
    config = ArchitectureConfig.from_dict(doc["config"])
    weights = {k: _decode_array(v) for k, v in doc["weights"].items()}
    bn = {
        k: BatchNormState(_decode_array(s["running_mean"]), _decode_array(s["running_var"]),
                          s["momentum"], s["eps"], False, s["num_batches"])
        for k, s in doc["batch_norm"].items()
    }
    return IgnnetModel(
        config, IgnnetParams(weights, bn), FeatureGraph.from_dict(doc["graph"]),
        Preprocessor.from_dict(doc["preprocessor"]) if doc["preprocessor"] else None,
        DatasetSchema.from_dict(doc["schema"]) if doc["schema"] else None,
        doc["metadata"],
    )


def save_model(model: IgnnetModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dumps_model(model))
    return path


def load_model(path: Union[str, Path]) -> IgnnetModel:
    return loads_model(Path(path).read_text())


def clone_model(model: IgnnetModel) -> IgnnetModel:
    return IgnnetModel(model.config, model.params.copy(), model.graph, model.preprocessor, model.schema,
                       copy.deepcopy(model.metadata))
