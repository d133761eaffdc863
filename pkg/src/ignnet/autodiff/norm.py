"""Batch normalization as a tape primitive."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateBatchError, ShapeError
from .tape import Tape, Var


@dataclass
class BatchNormState:
    """Running statistics of one batch-norm layer.

    The learnable scale and shift are ordinary parameters (they go through
    the optimizer); this object only holds what training mutates outside the
    gradient path.
    """

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    training: bool = True
    num_batches: int = field(default=0)

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1, eps: float = 1e-5) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels), momentum, eps)

    def copy(self) -> "BatchNormState":
        return BatchNormState(
            self.running_mean.copy(), self.running_var.copy(),
            self.momentum, self.eps, self.training, self.num_batches,
        )


def batch_norm(tape: Tape, x, scale, shift, state: BatchNormState) -> Var:
    """Normalize the last axis of ``x`` per channel.

    Leading axes are folded into the batch, so for node tensors of shape
    (batch, nodes, channels) the statistics are shared across nodes. In
    training mode batch statistics are used and the running statistics
    updated; in inference mode the running statistics give a fixed affine map.
    """
    x = tape._lift(x)
    channels = x.shape[-1]
    if state.running_mean.shape != (channels,):
        raise ShapeError(f"batch_norm: {channels} channels, state has {state.running_mean.shape}")
    eps = state.eps

    if state.training:
        rows = x.value.size // channels
        if rows < 2:
            raise DegenerateBatchError("batch_norm: training mode needs at least 2 rows per channel")
        flat = x.value.reshape(-1, channels)
        mu = flat.mean(axis=0)
        var = flat.var(axis=0)
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mu
        state.running_var = (1 - m) * state.running_var + m * var * rows / (rows - 1)
        state.num_batches += 1

        def forward(v, g, b):
            f = v.reshape(-1, channels)
            xhat = (f - f.mean(axis=0)) / np.sqrt(f.var(axis=0) + eps)
            return (xhat * g + b).reshape(v.shape)

        def backward(gout, vals, out):
            v, g, _ = vals
            f = v.reshape(-1, channels)
            dy = gout.reshape(-1, channels)
            inv_std = 1.0 / np.sqrt(f.var(axis=0) + eps)
            xhat = (f - f.mean(axis=0)) * inv_std
            dxhat = dy * g
            n = f.shape[0]
            dx = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            return dx.reshape(v.shape), (dy * xhat).sum(axis=0), dy.sum(axis=0)

        return tape.record("batchnorm", (x, scale, shift), forward, backward)

    mean = state.running_mean.copy()
    inv = 1.0 / np.sqrt(state.running_var + eps)

    def forward_eval(v, g, b):
        return (v - mean) * inv * g + b

    def backward_eval(gout, vals, out):
        v, g, _ = vals
        dy = gout.reshape(-1, channels)
        xhat = ((v - mean) * inv).reshape(-1, channels)
        return gout * inv * g, (dy * xhat).sum(axis=0), dy.sum(axis=0)

    return tape.record("batchnorm", (x, scale, shift), forward_eval, backward_eval)
