"""Differentiable operations.

Each op computes its forward value with numpy and, when any input requires a
gradient, records a :class:`Node` whose closure maps the output gradient to
input gradients. Broadcasting follows numpy rules; gradients are summed back
to each input's shape.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import DomainError, ShapeError
from .tensor import Node, Tensor, as_tensor, current_tape

DEFAULT_LEAKY_SLOPE = 0.2


def _record(op: str, inputs: Sequence[Tensor], out: np.ndarray, backward_fn, **saved) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    result = Tensor._wrap(out, requires_grad)
    if requires_grad:
        tape = current_tape()
        if tape is not None:
            tape.record(Node(op, tuple(inputs), result, backward_fn, saved))
        else:
            result.requires_grad = False
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(op: str, *ts: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(*(t.shape for t in ts))
    except ValueError:
        raise ShapeError(op, [t.shape for t in ts], "not broadcastable") from None


# ---------------------------------------------------------------------------
# binary arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _record(
        "add",
        (a, b),
        a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _record(
        "sub",
        (a, b),
        a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    """Elementwise product."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _record(
        "mul",
        (a, b),
        a.data * b.data,
        lambda g: (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record("neg", (a,), -a.data, lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product with numpy semantics, including batched operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul", [a.shape, b.shape], "scalar operand")
    ka = a.shape[-1]
    kb = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if ka != kb:
        raise ShapeError("matmul", [a.shape, b.shape], f"inner dimensions {ka} != {kb}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", [a.shape, b.shape], "batch dimensions") from None

    def backward(g):
        A = a.data[None, :] if a.ndim == 1 else a.data
        B = b.data[:, None] if b.ndim == 1 else b.data
        G = g
        if a.ndim == 1:
            G = np.expand_dims(G, -2)
        if b.ndim == 1:
            G = np.expand_dims(G, -1)
        ga = gb = None
        if a.requires_grad:
            ga = np.matmul(G, np.swapaxes(B, -1, -2))
            ga = ga.reshape(ga.shape[:-2] + (ga.shape[-1],)) if a.ndim == 1 else ga
            ga = _unbroadcast(ga, a.shape)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(A, -1, -2), G)
            gb = gb[..., 0] if b.ndim == 1 else gb
            gb = _unbroadcast(gb, b.shape)
        return ga, gb

    return _record("matmul", (a, b), out, backward)


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat", [], "no inputs")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat", [t.shape for t in ts], f"axis={axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", ts, out, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts or any(t.shape != ts[0].shape for t in ts):
        raise ShapeError("stack", [t.shape for t in ts], "shapes must match")
    out = np.stack([t.data for t in ts], axis=axis)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _record("stack", ts, out, backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", [a.shape, tuple(shape)]) from None
    return _record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record("transpose", (a,), np.transpose(a.data, axes), lambda g: (np.transpose(g, inverse),))


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    return _record(
        "swapaxes", (a,), np.swapaxes(a.data, ax1, ax2), lambda g: (np.swapaxes(g, ax1, ax2),)
    )


def expand_dims(a, axis: int) -> Tensor:
    a = as_tensor(a)
    return reshape(a, np.expand_dims(a.data, axis).shape)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(a, index) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate gradient."""
    a = as_tensor(a)
    if isinstance(index, Tensor):
        index = index.data.astype(np.intp)
    try:
        out = a.data[index]
    except IndexError as exc:
        raise ShapeError("getitem", [a.shape], str(exc)) from None

    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _record("getitem", (a,), np.asarray(out, dtype=np.float64), backward)


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]`` for an integer id array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("embedding", [table.shape, ids.shape], "token id out of range")
    out = table.data[ids]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return _record("embedding", (table,), out, backward)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    return _record(
        "sum",
        (a,),
        np.asarray(out),
        lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)),),
    )


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.data.size / max(np.asarray(out).size, 1)
    return _record(
        "mean",
        (a,),
        np.asarray(out),
        lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)) / count,),
    )


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _record("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def leaky_relu(a, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return _record("leaky_relu", (a,), a.data * factor, lambda g: (g * factor,), slope=slope)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(-np.logaddexp(0.0, -a.data))
    return _record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record("exp", (a,), out, lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0) or np.any(np.isnan(a.data)):
        raise DomainError(f"log: nonpositive input (min {np.nanmin(a.data) if a.size else 'n/a'})")
    return _record("log", (a,), np.log(a.data), lambda g: (g / a.data,))


def clip_min(a, floor: float) -> Tensor:
    """max(a, floor); the gradient is zero where the floor binds."""
    a = as_tensor(a)
    mask = a.data > floor
    return _record("clip_min", (a,), np.where(mask, a.data, floor), lambda g: (g * mask,))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _record("softmax", (a,), out, backward, axis=axis)


# operator sugar -------------------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
Tensor.__rmatmul__ = lambda self, other: matmul(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__getitem__ = lambda self, index: getitem(self, index)
Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 else shape)
Tensor.T = property(lambda self: transpose(self))
