"""Dense float64 tensors and the tape that records operations on them."""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError

_ids = itertools.count()
_state = threading.local()


class Tensor:
    """An immutable dense array of doubles.

    Arithmetic operators dispatch to :mod:`topic_graphsum.autodiff.ops`, so
    ``a @ b + c`` is recorded on the active tape whenever an operand has
    ``requires_grad`` set.
    """

    __slots__ = ("data", "requires_grad", "grad", "id", "node", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.id = next(_ids)
        self.node: Node | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        # internal fast path: arr is a freshly computed float64 array
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t.id = next(_ids)
        t.node = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, data={np.array2string(self.data, precision=4)})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass(eq=False)
class Node:
    """One recorded operation: which op, which inputs, which output."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    saved: dict = field(default_factory=dict)

    @property
    def input_ids(self) -> tuple[int, ...]:
        return tuple(t.id for t in self.inputs)

    @property
    def output_id(self) -> int:
        return self.output.id


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager to scope recording::

        with Tape() as tape:
            loss = f(params)
        grads = tape.backward(loss, params)
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        node.output.node = node
        self.nodes.append(node)

    def clear(self) -> None:
        for node in self.nodes:
            node.output.node = None
        self.nodes.clear()

    def backward(
        self,
        loss: Tensor,
        params: Iterable[Tensor] | None = None,
        retain: bool = False,
    ) -> list[np.ndarray] | None:
        """Reverse-mode sweep from ``loss``.

        Every ``requires_grad`` leaf reached gets its ``.grad`` accumulated.
        When ``params`` is given, their gradients are returned in order, with
        zeros for parameters that do not influence the loss.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
        params = list(params) if params is not None else None
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        if loss.node is None:
            if loss.requires_grad:
                leaves[loss.id] = loss
        else:
            try:
                stop = self.nodes.index(loss.node)
            except ValueError:
                raise ContractError("backward: loss was not recorded on this tape") from None
            for node in reversed(self.nodes[: stop + 1]):
                g = grads.pop(node.output.id, None)
                if g is None:
                    continue
                in_grads = node.backward(g)
                for inp, ig in zip(node.inputs, in_grads):
                    if ig is None or not inp.requires_grad:
                        continue
                    prev = grads.get(inp.id)
                    grads[inp.id] = ig if prev is None else prev + ig
                    if inp.node is None:
                        leaves[inp.id] = inp
        for tid, leaf in leaves.items():
            g = grads.get(tid)
            if g is None:
                continue
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        out = None
        if params is not None:
            out = []
            for p in params:
                g = grads.get(p.id)
                out.append(np.zeros_like(p.data) if g is None else np.array(g, dtype=np.float64))
        if not retain:
            self.clear()
        return out


def _stack() -> list[Tape]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = _state.tapes = []
        _state.default = Tape()
        _state.enabled = True
    return stack


def current_tape() -> Tape | None:
    """Tape that new operations are recorded on, or None inside ``no_grad``."""
    stack = _stack()
    if not _state.enabled:
        return None
    return stack[-1] if stack else _state.default


def default_tape() -> Tape:
    _stack()
    return _state.default


@contextmanager
def no_grad():
    _stack()
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def backward(loss: Tensor, params: Iterable[Tensor] | None = None, retain: bool = False):
    """Differentiate ``loss`` on whichever tape recorded it."""
    tape = None
    if loss.node is not None:
        for candidate in (*reversed(_stack()), default_tape()):
            if loss.node in candidate.nodes:
                tape = candidate
                break
        if tape is None:
            raise ContractError("backward: tape for this loss was already consumed")
    else:
        tape = current_tape() or default_tape()
    return tape.backward(loss, params, retain=retain)
