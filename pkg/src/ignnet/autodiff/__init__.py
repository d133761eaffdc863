"""Dense float64 tensors with a reverse-mode tape, Adam and batch norm."""

from .gradcheck import grad_check
from .norm import BatchNormState, batch_norm
from .optim import AdamState, adam_step
from .tape import Tape, Var, as_tensor, exact_sum, run_backward, sigmoid, softmax

__all__ = [
    "AdamState",
    "BatchNormState",
    "Tape",
    "Var",
    "adam_step",
    "as_tensor",
    "batch_norm",
    "exact_sum",
    "grad_check",
    "run_backward",
    "sigmoid",
    "softmax",
]
