"""Reverse-mode differentiation over an explicit operation tape.

A :class:`Tape` records every primitive applied to its variables in execution
order. Each record keeps the parent indices, the forward value, a forward
function (so the tape can be replayed with new leaf values) and a
vector-Jacobian product used by :func:`run_backward`.

Values are float64 numpy arrays of rank 0 to 3. Leaves are validated by
:func:`as_tensor`, every op output is checked for NaN/Inf.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ..errors import NumericError, ShapeError, StructureError

MAX_RANK = 3

Array = np.ndarray
Backward = Callable[[Array, Sequence[Array], Array], Sequence[Optional[Array]]]


def as_tensor(value, name: str = "tensor") -> Array:
    """Copy ``value`` into a read-only float64 array, rejecting NaN/Inf."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim > MAX_RANK:
        raise ShapeError(f"{name}: rank {arr.ndim} exceeds {MAX_RANK}")
    if 0 in arr.shape:
        raise ShapeError(f"{name}: empty extent in shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericError(f"{name}: non-finite entries")
    arr.setflags(write=False)
    return arr


def sigmoid(x):
    """Elementwise logistic function evaluated with ``math.exp``.

    Each element goes through the same scalar code path whatever the array
    size, so a value computed in a batch is bit-identical to the value
    computed alone. Used for link functions where exact replay matters.
    """
    def one(z: float) -> float:
        if z >= 0.0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)

    arr = np.asarray(x, dtype=np.float64)
    out = np.fromiter((one(float(z)) for z in arr.ravel()), dtype=np.float64, count=arr.size)
    return out.reshape(arr.shape) if arr.ndim else float(out[0])


def softmax(x):
    """Row-wise softmax over the last axis with scalar ``math`` arithmetic."""
    arr = np.asarray(x, dtype=np.float64)
    flat = arr.reshape(-1, arr.shape[-1])
    out = np.empty_like(flat)
    for r, row in enumerate(flat):
        top = max(row)
        e = [math.exp(float(z) - top) for z in row]
        total = math.fsum(e)
        out[r] = [v / total for v in e]
    return out.reshape(arr.shape)


def exact_sum(x, axis: int = -1) -> Array:
    """Correctly rounded sum along ``axis`` (``math.fsum``), order independent."""
    arr = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
    flat = arr.reshape(-1, arr.shape[-1])
    out = np.fromiter((math.fsum(row) for row in flat), dtype=np.float64, count=flat.shape[0])
    return out.reshape(arr.shape[:-1])


def _sigmoid_vec(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _node_major(x: Array) -> Array:
    """(batch, n, d) -> (n, batch * d)."""
    return x.transpose(1, 0, 2).reshape(x.shape[1], -1)


def _left_shared(a: Array, y: Array) -> Array:
    """``a @ y[b]`` for every batch entry as a single matrix product."""
    out = a @ _node_major(y)
    return out.reshape(a.shape[0], y.shape[0], y.shape[2]).transpose(1, 0, 2)


class Node:
    __slots__ = ("op", "parents", "value", "forward", "backward", "requires_grad", "param", "scope")

    def __init__(self, op, parents, value, forward, backward, requires_grad, param=None, scope=None):
        self.op = op
        self.parents = tuple(parents)
        self.value = value
        self.forward = forward
        self.backward = backward
        self.requires_grad = requires_grad
        self.param = param
        self.scope = scope


class Var:
    """Handle to one recorded value on a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> Array:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.add(self, self.tape.mul(other, -1.0))

    def __mul__(self, other):
        return self.tape.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape.mul(self, -1.0)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Var(#{self.index} {node.op} shape={self.shape})"


class Tape:
    """Ordered record of primitive operations.

    >>> tape = Tape()
    >>> w = tape.param("w", [1.0, -2.0, 3.0])
    >>> out = tape.sum(tape.relu(w))
    >>> run_backward(tape, out)["w"].tolist()
    [1.0, 0.0, 1.0]
    """

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.params: dict[str, int] = {}
        self.check_finite = check_finite
        self._scope: Optional[str] = None

    # -- leaves ---------------------------------------------------------
    def param(self, name: str, value) -> Var:
        if name in self.params:
            raise StructureError(f"parameter {name!r} already on tape")
        arr = value if _is_frozen(value) else as_tensor(value, name)
        idx = self._append(Node("param", (), arr, None, None, True, param=name))
        self.params[name] = idx
        return Var(self, idx)

    def constant(self, value, name: str = "constant") -> Var:
        arr = value if _is_frozen(value) else as_tensor(value, name)
        return Var(self, self._append(Node("constant", (), arr, None, None, False)))

    def _lift(self, x) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise StructureError("variable belongs to a different tape")
            return x
        return self.constant(x)

    @contextlib.contextmanager
    def scope(self, name: str) -> Iterator[None]:
        """Tag ops recorded inside the block, for error messages."""
        saved, self._scope = self._scope, name
        try:
            yield
        finally:
            self._scope = saved

    def _append(self, node: Node) -> int:
        node.scope = self._scope
        self.nodes.append(node)
        return len(self.nodes) - 1

    def record(self, op: str, inputs: Sequence, forward: Callable, backward: Backward) -> Var:
        """Apply ``forward`` to the input values and append the result."""
        parents = [self._lift(x) for x in inputs]
        values = [p.value for p in parents]
        with np.errstate(over="ignore", invalid="ignore"):
            out = forward(*values)
        # a finite sum implies finite entries; only overflow needs the full scan
        if self.check_finite and not math.isfinite(out.sum()) and not np.isfinite(out).all():
            where = f" in {self._scope}" if self._scope else ""
            raise NumericError(f"non-finite output of {op}{where}")
        out.setflags(write=False)
        requires = any(self.nodes[p.index].requires_grad for p in parents)
        node = Node(op, [p.index for p in parents], out, forward, backward, requires)
        return Var(self, self._append(node))

    # -- primitives -----------------------------------------------------
    def matmul(self, a, b) -> Var:
        """Matrix product. Supports 2D@2D, 3D@2D (shared right factor) and
        2D@3D (shared left factor, e.g. adjacency times node batch)."""
        a, b = self._lift(a), self._lift(b)
        sa, sb = a.shape, b.shape
        if len(sa) < 2 or len(sb) < 2 or sa[-1] != sb[-2] or (len(sa) == 3 and len(sb) == 3):
            raise ShapeError(f"matmul: incompatible shapes {sa} and {sb}")

        def backward(g, vals, out):
            x, y = vals
            if x.ndim == 3:
                gx = (g.reshape(-1, g.shape[-1]) @ y.T).reshape(x.shape)
                gy = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            elif y.ndim == 3:
                gx = _node_major(g) @ _node_major(y).T
                gy = _left_shared(x.T, g)
            else:
                gx = g @ y.T
                gy = x.T @ g
            return gx, gy

        def forward(x, y):
            if y.ndim == 3:
                return _left_shared(x, y)
            if x.ndim == 3:
                return (x.reshape(-1, x.shape[-1]) @ y).reshape(x.shape[0], x.shape[1], y.shape[1])
            return x @ y

        return self.record("matmul", (a, b), forward, backward)

    def add(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise ShapeError(f"add: cannot broadcast {a.shape} and {b.shape}") from None

        def backward(g, vals, out):
            return _unbroadcast(g, vals[0].shape), _unbroadcast(g, vals[1].shape)

        return self.record("add", (a, b), np.add, backward)

    def mul(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise ShapeError(f"mul: cannot broadcast {a.shape} and {b.shape}") from None

        def backward(g, vals, out):
            x, y = vals
            return _unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)

        return self.record("mul", (a, b), np.multiply, backward)

    def relu(self, x) -> Var:
        # subgradient at exactly 0 is 0
        return self.record(
            "relu", (x,), lambda v: np.maximum(v, 0.0), lambda g, vals, out: (g * (vals[0] > 0),)
        )

    def sigmoid(self, x, scalar_path: bool = False) -> Var:
        """Logistic function; ``scalar_path`` selects :func:`sigmoid`."""
        fn = sigmoid if scalar_path else _sigmoid_vec
        return self.record(
            "sigmoid", (x,), lambda v: np.asarray(fn(v), dtype=np.float64),
            lambda g, vals, out: (g * out * (1.0 - out),),
        )

    def softmax(self, x) -> Var:
        """Softmax over the last axis (scalar arithmetic, see :func:`softmax`)."""
        def backward(g, vals, out):
            return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

        return self.record("softmax", (x,), softmax, backward)

    def concat(self, xs: Sequence, axis: int = -1) -> Var:
        xs = [self._lift(x) for x in xs]
        sizes = [x.shape[axis] for x in xs]
        bounds = np.cumsum(sizes)[:-1]

        def backward(g, vals, out):
            return tuple(np.split(g, bounds, axis=axis))

        return self.record("concat", xs, lambda *v: np.concatenate(v, axis=axis), backward)

    def reshape(self, x, shape: tuple) -> Var:
        x = self._lift(x)
        if int(np.prod(shape)) != x.value.size:
            raise ShapeError(f"reshape: {x.shape} -> {shape}")
        return self.record(
            "reshape", (x,), lambda v: v.reshape(shape).copy(),
            lambda g, vals, out: (g.reshape(vals[0].shape),),
        )

    def sum(self, x, axis: Optional[int] = None, exact: bool = False) -> Var:
        """Sum-reduce over ``axis`` (all axes when None). ``exact`` uses
        :func:`exact_sum` so the result does not depend on summation order."""
        x = self._lift(x)
        if exact and axis is None:
            raise ShapeError("exact sum needs an axis")

        def forward(v):
            if exact:
                return np.asarray(exact_sum(v, axis))
            return np.asarray(v.sum(axis=axis))

        def backward(g, vals, out):
            v = vals[0]
            if axis is None:
                return (np.broadcast_to(g, v.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), v.shape).copy(),)

        return self.record("sum", (x,), forward, backward)

    def mean(self, x) -> Var:
        x = self._lift(x)
        return self.mul(self.sum(x), 1.0 / x.value.size)

    def binary_cross_entropy(self, p, y, clamp: float = 1e-12) -> Var:
        """Per-element -[y log p + (1-y) log(1-p)], probabilities clamped."""
        p, y = self._lift(p), self._lift(y)

        def forward(pv, yv):
            pc = np.clip(pv, clamp, 1.0 - clamp)
            return -(yv * np.log(pc) + (1.0 - yv) * np.log1p(-pc))

        def backward(g, vals, out):
            pv, yv = vals
            inside = (pv > clamp) & (pv < 1.0 - clamp)
            pc = np.clip(pv, clamp, 1.0 - clamp)
            return g * inside * (-(yv / pc) + (1.0 - yv) / (1.0 - pc)), None

        return self.record("bce", (p, y), forward, backward)

    def nll(self, p, labels: Array, clamp: float = 1e-12) -> Var:
        """Per-row -log p[row, label], probability clamped from below."""
        p = self._lift(p)
        rows = np.arange(len(labels))
        labels = np.asarray(labels, dtype=np.int64)

        def forward(pv):
            return -np.log(np.maximum(pv[rows, labels], clamp))

        def backward(g, vals, out):
            pv = vals[0]
            grad = np.zeros_like(pv)
            picked = pv[rows, labels]
            grad[rows, labels] = np.where(picked > clamp, -g / np.maximum(picked, clamp), 0.0)
            return (grad,)

        return self.record("nll", (p,), forward, backward)

    # -- replay ---------------------------------------------------------
    def replay(self, overrides: Optional[dict] = None) -> list[Array]:
        """Recompute every node from the leaves; ``overrides`` maps parameter
        names to substitute values. Returns the list of node values."""
        overrides = overrides or {}
        values: list[Array] = []
        for node in self.nodes:
            if node.forward is None:
                values.append(np.asarray(overrides.get(node.param, node.value), dtype=np.float64))
            else:
                values.append(node.forward(*(values[i] for i in node.parents)))
        return values


def _is_frozen(value) -> bool:
    return (
        isinstance(value, np.ndarray)
        and value.dtype == np.float64
        and not value.flags.writeable
        and value.ndim <= MAX_RANK
    )


def run_backward(tape: Tape, output: Var) -> dict[str, Array]:
    """Gradient of a scalar output with respect to every tape parameter.

    Parameters the output does not depend on get zero gradients.
    """
    if output.tape is not tape:
        raise StructureError("output variable belongs to a different tape")
    out_val = output.value
    if out_val.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {out_val.shape}")
    for i, node in enumerate(tape.nodes):
        if any(p >= i for p in node.parents):
            raise StructureError(f"node {i} ({node.op}) references a later node: tape is cyclic")

    grads: list[Optional[Array]] = [None] * len(tape.nodes)
    grads[output.index] = np.ones_like(out_val)
    for i in range(output.index, -1, -1):
        g = grads[i]
        node = tape.nodes[i]
        if g is None or node.backward is None or not node.requires_grad:
            continue
        parent_vals = [tape.nodes[p].value for p in node.parents]
        for p, pg in zip(node.parents, node.backward(g, parent_vals, node.value)):
            if pg is None or not tape.nodes[p].requires_grad:
                continue
            grads[p] = pg if grads[p] is None else grads[p] + pg

    result = {}
    for name, idx in tape.params.items():
        g = grads[idx]
        result[name] = np.zeros_like(tape.nodes[idx].value) if g is None else np.asarray(g, dtype=np.float64)
    return result
