"""Dense tensors and the reverse-mode tape.

Every op that consumes a tensor with ``requires_grad`` returns a node holding
its parents and a backward closure. Nodes get a global sequence number at
creation, so insertion order is a topological order: a node's inputs always
exist before it does. ``backward`` replays the reachable nodes in reverse
insertion order, each exactly once.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

_counter = itertools.count()
_local = threading.local()


def grad_enabled() -> bool:
    return getattr(_local, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Ops inside the block record no nodes (per thread)."""
    prev = grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "node_id", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Optional[Callable] = None
        self.node_id: Optional[int] = next(_counter) if requires_grad else None
        self.op = "leaf"
        self.name = name

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward_fn: Callable, op: str) -> "Tensor":
        """Build an op result; records a node only if some parent needs gradients."""
        out = cls(data)
        if grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.parents = tuple(parents)
            out.backward_fn = backward_fn
            out.node_id = next(_counter)
            out.op = op
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> dict:
        return backward(self)

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, ops.as_tensor(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, ops.as_tensor(other, self))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(ops.as_tensor(other, self), self)

    def __mul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.mul(self, ops.as_tensor(other, self))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


@dataclass
class Graph:
    """Nodes reachable from a loss, in insertion (topological) order."""

    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, loss: Tensor) -> "Graph":
        seen: set[int] = set()
        found: list[Tensor] = []
        stack = [loss]
        while stack:
            t = stack.pop()
            if not t.requires_grad or id(t) in seen:
                continue
            seen.add(id(t))
            found.append(t)
            stack.extend(t.parents)
        found.sort(key=lambda t: t.node_id)
        return cls(found)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor, graph: Graph | None = None, release: bool = True) -> dict[int, np.ndarray]:
    """Reverse-mode sweep from a scalar loss.

    Leaf tensors receive (accumulate into) ``.grad``. Returns a map from
    node_id to gradient for every leaf reached. With ``release`` the saved
    forward state of interior nodes is dropped afterwards.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor that requires grad")
    graph = graph or Graph.trace(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaf_grads: dict[int, np.ndarray] = {}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.op == "leaf":
            node.grad = g.copy() if node.grad is None else node.grad + g
            leaf_grads[node.node_id] = node.grad
            continue
        in_grads = node.backward_fn(g)
        for parent, pg in zip(node.parents, in_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        if release:
            node.backward_fn = None
            node.parents = ()
            node.requires_grad = False
    return leaf_grads


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)
