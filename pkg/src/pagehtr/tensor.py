"""Dense tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` whenever
one of their inputs requires a gradient. Outside a tape nothing is recorded,
which is the inference path::

    with Tape() as tape:
        loss = model.loss(batch)
    tape.backward(loss, params=model.parameters())
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

__all__ = ["Tensor", "Tape", "backward", "current_tape", "as_tensor", "set_check_finite"]

_TAPES: list["Tape"] = []
_CHECK_FINITE = False


def set_check_finite(enabled: bool) -> bool:
    """Validate every op output for NaN/Inf. Returns the previous setting."""
    global _CHECK_FINITE
    prev, _CHECK_FINITE = _CHECK_FINITE, bool(enabled)
    return prev


def current_tape() -> "Tape | None":
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """An ndarray plus gradient bookkeeping.

    ``data`` keeps its numpy dtype; ops never upcast, so a model cast to
    float64 runs entirely in float64 (used by gradient checks).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f"{self.name}: " if self.name else ""
        return f"Tensor({label}shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # operator sugar, all routed through ops
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
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a python scalar")
        return ops.scale(self, 1.0 / other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)

    def sum(self):
        from . import ops
        return ops.sum(self)

    def mean(self):
        from . import ops
        return ops.mean(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float32))


class Tape:
    """Ordered record of executed primitive ops.

    Nodes are appended in execution order, so every node's inputs precede it
    and a single reverse sweep is a valid topological traversal.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPES.pop()
        assert popped is self, "tapes must be exited in LIFO order"
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out: Tensor, parents, backward_fn) -> Tensor:
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        self.nodes.append(out)
        return out

    def backward(self, loss: Tensor, params=(), retain: bool = False):
        backward(loss, self, params=params, retain=retain)


def backward(loss: Tensor, tape: Tape, params=(), retain: bool = False):
    """Populate ``.grad`` on every tensor reachable from ``loss``.

    Gradients accumulate into leaves that already hold one, which is how
    micro-batch accumulation works. Any tensor in ``params`` left untouched
    gets an explicit zero gradient. Intermediate gradients and the graph are
    released unless ``retain`` is set, so a tape is single-use by default.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad or not any(n is loss for n in reversed(tape.nodes)):
        raise ContractError("loss was not produced on this tape")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None:
            continue
        parents = node._parents
        need = tuple(p.requires_grad for p in parents)
        grads = node._backward(g, need)
        for p, gp, n in zip(parents, grads, need):
            if not n or gp is None:
                continue
            if gp.shape != p.data.shape:
                raise AssertionError(f"gradient shape {gp.shape} != {p.data.shape}")
            p.grad = gp if p.grad is None else p.grad + gp
        if not retain:
            node.grad = None
            node._parents = ()
            node._backward = None
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def make(data, parents, backward_fn) -> Tensor:
    """Wrap an op result, recording it when a tape is active and needs it."""
    out = Tensor(data)
    if _CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite values produced by a forward op")
    tape = current_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(out, parents, backward_fn)
    return out
