"""Dense float64 tensors with a tape-based reverse-mode differentiator.

Operations executed while a :class:`Tape` is active are appended to it
whenever one of their inputs needs a gradient.  :func:`backward` replays the
tape in reverse and accumulates gradients into every leaf that has
``requires_grad`` set.  Outside a tape the same functions simply compute
values, which is what evaluation code relies on.

Leading axes are treated as batch axes by :func:`matmul` and the
elementwise ops broadcast the usual numpy way; gradients are summed back
down to the input shape.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class ProvenanceError(RuntimeError):
    pass


_ACTIVE: list["Tape"] = []


class Tape:
    """Ordered record of executed primitives (the computation record).

    Use as a context manager; nested tapes record into the innermost one.
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self.leaves: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_tape")
    __array_priority__ = 100

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.values = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)

    def numpy(self) -> np.ndarray:
        return self.values

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(t: Tensor, tape: Tape) -> bool:
    return t.requires_grad or t._tape is tape


def _record(out_values: np.ndarray, inputs: tuple[Tensor, ...], grad_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = out_values
    out.grad = None
    out.requires_grad = False
    out._tape = None
    if _ACTIVE:
        tape = _ACTIVE[-1]
        if any(_tracked(t, tape) for t in inputs):
            for t in inputs:
                if t.requires_grad and t._tape is None:
                    tape.leaves.setdefault(id(t), t)
            out._tape = tape
            tape.nodes.append((out, inputs, grad_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----------------------------------------------------------------------
# primitives
# ----------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes batch."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeError(f"matmul needs arrays, got {a.shape} and {b.shape}")
    inner_a = a.shape[-1]
    inner_b = b.shape[-2] if b.ndim >= 2 else b.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    av, bv = a.values, b.values

    def grad_fn(g):
        if bv.ndim == 1:
            ga = np.multiply.outer(g, bv)
            gb = np.tensordot(av, g, axes=(tuple(range(av.ndim - 1)), tuple(range(g.ndim))))
            return _unbroadcast(ga, av.shape), gb
        if av.ndim == 1:
            ga = bv @ g if bv.ndim == 2 else None
            gb = np.multiply.outer(av, g)
            return ga, _unbroadcast(gb, bv.shape)
        ga = g @ np.swapaxes(bv, -1, -2)
        if bv.ndim == 2:
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return _unbroadcast(ga, av.shape), gb

    return _record(np.matmul(av, bv), (a, b), grad_fn)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(
        a.values + b.values, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(
        a.values - b.values, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.values, b.values
    return _record(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.values, b.values
    out = av / bv
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.values)
    return _record(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.values)
    return _record(t, (x,), lambda g: (g * (1.0 - t * t),))


def activation(x, kind: str) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def relu(x) -> Tensor:
    """max(x, 0); the derivative at exactly 0 is taken as 0."""
    x = as_tensor(x)
    mask = x.values > 0
    return _record(np.where(mask, x.values, 0.0), (x,), lambda g: (g * mask,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    r = np.sqrt(x.values)
    return _record(r, (x,), lambda g: (g * 0.5 / r,))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _record(p, (x,), grad_fn)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.values - x.values.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _record(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def row_normalize(r) -> Tensor:
    """Row-stochastic version of a square (optionally batched) matrix.

    Each row goes through a softmax, which is defined for negative
    affinities where dividing by the row sum is not.
    """
    r = as_tensor(r)
    if r.ndim < 2 or r.shape[-1] != r.shape[-2]:
        raise ShapeError(f"row_normalize needs a square matrix, got {r.shape}")
    return softmax(r, axis=-1)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    shape = x.shape

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.sum(x.values, axis=axis, keepdims=keepdims), (x,), grad_fn)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 2:
        return x
    return _record(np.swapaxes(x.values, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _record(x.values.reshape(shape), (x,), lambda g: (g.reshape(old),))


def getitem(x, index) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate gradient."""
    x = as_tensor(x)
    shape = x.shape

    def grad_fn(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _record(np.array(x.values[index]), (x,), grad_fn)


def embedding(table, ids) -> Tensor:
    """Rows of ``table`` selected by an integer array of any shape."""
    return getitem(table, np.asarray(ids, dtype=np.intp))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _record(
        np.concatenate([t.values for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def dot(a, b) -> Tensor:
    """Inner product along the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1:] != b.shape[-1:]:
        raise ShapeError(f"dot dimension mismatch: {a.shape} vs {b.shape}")
    return sum(mul(a, b), axis=-1)


def l2_normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    x = as_tensor(x)
    norm = sqrt(add(sum(mul(x, x), axis=axis, keepdims=True), eps))
    return div(x, norm)


# ----------------------------------------------------------------------
# differentiation
# ----------------------------------------------------------------------


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every tracked leaf.

    Leaves recorded on the tape but not reachable from ``loss`` get a zero
    gradient contribution (their ``grad`` is allocated if missing).
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape is None:
        tape = loss._tape
        if tape is None:
            raise ProvenanceError("loss was not produced on any tape")
    elif loss._tape is not tape:
        raise ProvenanceError("loss was not produced by this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for out, inputs, grad_fn in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, grad_fn(g)):
            if gi is None or not _tracked(t, tape):
                continue
            prev = grads.get(id(t))
            grads[id(t)] = gi if prev is None else prev + gi

    for key, leaf in tape.leaves.items():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.values)
        g = grads.get(key)
        if g is not None:
            leaf.grad = leaf.grad + g
