"""Per-node contribution scores and their presentation.

For the interpretable head the pre-link output is ``sum_i tau_i + b`` with
``tau_i = w_i * g_i``, so the scores and the bias reproduce the prediction
exactly through the link function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .autodiff import sigmoid, softmax
from .charts import centered_bars
from .data.preprocess import Preprocessor
from .errors import AlignmentError, ConfigurationError, UnsupportedHeadError
from .model import IgnnetModel


@dataclass
class Explanation:
    node_names: list[str]
    tau: np.ndarray
    bias: float
    prediction: Union[float, np.ndarray]
    predicted_class: int
    class_index: Optional[int] = None  # class whose weights produced tau (multi-class only)
    logits: Optional[np.ndarray] = None
    all_tau: Optional[np.ndarray] = None
    all_bias: Optional[np.ndarray] = None
    grouped: Optional[dict[str, float]] = None
    class_names: list[str] = field(default_factory=list)

    @property
    def binary(self) -> bool:
        return self.class_index is None

    def top_k(self, k: int) -> list[int]:
        """Node indices ordered by |tau| descending (ties by index)."""
        if k < 1:
            raise ConfigurationError("k must be at least 1")
        order = sorted(range(len(self.tau)), key=lambda i: (-abs(self.tau[i]), i))
        return order[:k]

    def reconstruct(self) -> Union[float, np.ndarray]:
        """Apply the link to the summed scores: equals ``prediction`` exactly."""
        if self.binary:
            return float(sigmoid(math.fsum(self.tau) + self.bias))
        logits = np.array([math.fsum(row) for row in self.all_tau]) + self.all_bias
        return softmax(logits)

    def to_dict(self) -> dict:
        d = {
            "node_names": self.node_names,
            "tau": [float(v) for v in self.tau],
            "bias": float(self.bias),
            "prediction": float(self.prediction) if self.binary else [float(v) for v in self.prediction],
            "class": self.predicted_class,
        }
        if self.class_names:
            d["class_name"] = self.class_names[self.predicted_class]
        if not self.binary:
            d["class_index"] = self.class_index
            if self.all_tau is not None:
                d["all_tau"] = self.all_tau.tolist()
                d["all_bias"] = self.all_bias.tolist()
        if self.grouped is not None:
            d["grouped"] = self.grouped
        return d


def explain_instance(model: IgnnetModel, x, class_index: Optional[int] = None) -> Explanation:
    """Scores for one preprocessed row.

    Multi-class models explain the predicted class unless ``class_index`` is
    given; the scores of every class stay available in ``all_tau``.
    """
    if model.config.head != "interpretable":
        raise UnsupportedHeadError("the opaque head has no additive scores; audit it with the KernelSHAP tools instead")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.n_nodes:
        raise AlignmentError(f"expected one row of {model.n_nodes} node values, got shape {x.shape}")
    out = model.forward(x[None, :])
    names = list(model.graph.node_names)
    classes = list(model.schema.classes) if model.schema else []
    if model.config.n_outputs == 1:
        p = float(out.prediction[0])
        return Explanation(names, out.tau[0].copy(), out.bias, p, int(p >= 0.5),
                           logits=out.logits[0:1].copy(), class_names=classes)
    probs = out.prediction[0].copy()
    predicted = int(np.argmax(probs))
    c = predicted if class_index is None else int(class_index)
    if not 0 <= c < model.config.n_outputs:
        raise ConfigurationError(f"class index {c} out of range")
    return Explanation(
        names, out.tau[0, c].copy(), float(out.bias[c]), probs, predicted, c, out.logits[0].copy(),
        out.tau[0].copy(), out.bias.copy(), class_names=classes,
    )


def group_scores(explanation: Explanation, preprocessor: Preprocessor) -> dict[str, float]:
    """Column-level scores: the sum of tau over each column's node block."""
    if preprocessor.n_nodes != len(explanation.tau):
        raise AlignmentError(f"explanation has {len(explanation.tau)} nodes, preprocessor expands to "
                             f"{preprocessor.n_nodes}")
    return {b.column: math.fsum(explanation.tau[b.start:b.stop]) for b in preprocessor.blocks}


def emit_chart(explanation: Explanation, k: int = 10, title: Optional[str] = None) -> tuple[str, dict]:
    """Bias-centred bar chart of the top-``k`` scores plus the JSON record
    (which keeps every score in node order)."""
    top = explanation.top_k(k)
    labels = [explanation.node_names[i] for i in top]
    values = [float(explanation.tau[i]) for i in top]
    if explanation.binary:
        pred = f"prediction {float(explanation.prediction):.4f} (class {explanation.predicted_class})"
    else:
        pred = (f"prediction {float(explanation.prediction[explanation.predicted_class]):.4f} "
                f"(class {explanation.predicted_class}); scores for class {explanation.class_index}")
    notes = [pred, f"bias {explanation.bias:.6f}; top {len(top)} of {len(explanation.tau)} scores by |tau|"]
    svg = centered_bars(labels, values, explanation.bias, title or "Feature scores", notes)
    record = explanation.to_dict()
    record["top_k"] = top
    return svg, record
