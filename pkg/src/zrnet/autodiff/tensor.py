"""Tensor values and the tape that records operations on them.

Recording happens only while a :class:`Tape` is active on the current thread
and at least one operand has ``requires_grad`` set.  Nodes are appended in
execution order, so the tape is always topologically sorted and a single
reversed sweep visits every node exactly once.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ShapeError, TapeError

_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A float64 ndarray plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None
        self.name = name

    @property
    def shape(self) -> tuple:
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
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; implementations live in ``ops``.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    """One recorded primitive: parents, outputs and the vector-Jacobian rule.

    ``vjp`` receives one cotangent per output (``None`` when an output never
    received gradient) and returns one cotangent per parent (``None`` allowed).
    """

    __slots__ = ("parents", "outputs", "vjp", "op", "tape")

    def __init__(self, op: str, parents: Sequence[Tensor], outputs: Sequence[Tensor], vjp: Callable, tape: "Tape"):
        self.op = op
        self.tape = tape
        self.parents = tuple(parents)
        self.outputs = tuple(outputs)
        self.vjp = vjp


def record(op: str, parents: Sequence[Tensor], outputs: Sequence[Tensor], vjp: Callable) -> None:
    """Attach a node to ``outputs`` if any parent is tracked on an active tape."""
    tape = active_tape()
    if tape is None or not any(p.requires_grad for p in parents):
        return
    node = Node(op, parents, outputs, vjp, tape)
    for out in outputs:
        out.requires_grad = True
        out.node = node
    tape._append(node)


class Tape:
    """Append-only log of primitive operations for one reverse sweep.

    Use as a context manager around the forward computation, then call
    :meth:`backward` once.  Call :meth:`reset` to reuse the object.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:  # pragma: no cover - defensive
            stack.remove(self)

    def _append(self, node: Node) -> None:
        if self.consumed:
            raise TapeError("cannot record on a tape that has already been differentiated")
        self.nodes.append(node)

    def reset(self) -> None:
        self.nodes = []
        self.consumed = False

    def backward(self, loss: Tensor, wrt: Optional[Sequence[Tensor]] = None):
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every tracked leaf.

        If ``wrt`` is given, also return the gradients for those tensors,
        with zeros for tensors the loss does not depend on.
        """
        if self.consumed:
            raise TapeError("backward already called on this tape; call reset() first")
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        if loss.is_leaf and loss.requires_grad:
            leaves[id(loss)] = loss
        for node in reversed(self.nodes):
            out_grads = [grads.pop(id(o), None) for o in node.outputs]
            if all(g is None for g in out_grads):
                continue
            parent_grads = node.vjp(out_grads)
            for parent, g in zip(node.parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                if g.shape != parent.shape:
                    raise ShapeError(f"{node.op}: gradient shape {g.shape} != operand shape {parent.shape}")
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if parent.is_leaf:
                    leaves[key] = parent
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        result = None
        if wrt is not None:
            result = [np.zeros_like(t.data) if grads.get(id(t)) is None else grads[id(t)].copy() for t in wrt]
        self._release()
        return result

    def _release(self) -> None:
        # Nodes and their outputs reference each other; break the cycles so the
        # saved activations are freed by refcounting instead of waiting for gc.
        for node in self.nodes:
            node.vjp = None
            node.parents = ()
            node.outputs = ()
        self.nodes = []


def backward(loss: Tensor, wrt: Optional[Sequence[Tensor]] = None):
    """Differentiate ``loss`` on the tape that recorded it."""
    if loss.node is None:
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        if wrt is None:
            return None
        return [np.ones_like(t.data) if t is loss else np.zeros_like(t.data) for t in wrt]
    return loss.node.tape.backward(loss, wrt)
