"""Central finite-difference check of tape gradients."""

from __future__ import annotations

from typing import Callable, Mapping, Optional, Union

import numpy as np

from ..errors import NumericError
from .tape import Tape, Var, run_backward

Point = Union[np.ndarray, Mapping[str, np.ndarray]]


def _evaluate(fn, point: dict, single: bool) -> float:
    tape = Tape()
    handles = {name: tape.param(name, value) for name, value in point.items()}
    out = fn(tape, handles["x"] if single else handles)
    value = float(np.asarray(out.value).reshape(-1)[0])
    if not np.isfinite(value):
        raise NumericError("grad_check: function value is not finite")
    return value


def grad_check(
    fn: Callable[[Tape, Union[Var, dict]], Var],
    point: Point,
    eps: float = 1e-5,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Largest relative error between tape and central-difference gradients.

    ``fn(tape, x)`` must build a scalar output from the parameter handle(s):
    a single :class:`Var` when ``point`` is an array, otherwise a dict of
    handles keyed like ``point``. The error per coordinate is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.

    ``max_coords`` caps the number of probed coordinates per parameter
    (chosen with ``seed``); ``None`` probes all of them.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    single = not isinstance(point, Mapping)
    named = {"x": point} if single else dict(point)
    named = {k: np.array(v, dtype=np.float64) for k, v in named.items()}

    tape = Tape()
    handles = {name: tape.param(name, value) for name, value in named.items()}
    out = fn(tape, handles["x"] if single else handles)
    if not np.isfinite(out.value).all():
        raise NumericError("grad_check: function value is not finite")
    analytic = run_backward(tape, out)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, value in named.items():
        coords = np.arange(value.size)
        if max_coords is not None and value.size > max_coords:
            coords = np.sort(rng.choice(value.size, size=max_coords, replace=False))
        for c in coords:
            up = {k: v.copy() for k, v in named.items()}
            down = {k: v.copy() for k, v in named.items()}
            up[name].reshape(-1)[c] += eps
            down[name].reshape(-1)[c] -= eps
            numeric = (_evaluate(fn, up, single) - _evaluate(fn, down, single)) / (2 * eps)
            a = float(analytic[name].reshape(-1)[c])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
