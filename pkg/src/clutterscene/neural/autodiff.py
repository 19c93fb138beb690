"""A small reverse-mode autodiff over dense numpy arrays.

Every operation returns a new ``Tensor`` that remembers its inputs and how
to push an output gradient back to them. ``backward`` walks that record in
reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents: tuple["Tensor", ...] = (), backward_fn: Callable | None = None,
                 requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}{', ' + self.name if self.name else ''})"

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        self.grad = None

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def backward(self, grad=None) -> None:
        backward(self, grad)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def constant(value) -> Tensor:
    return Tensor(value)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True)
    else:
        t.grad = t.grad + g


def backward(root: Tensor, grad=None) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every leaf that requires grad."""
    if root.backward_fn is None and not root.parents and not root.requires_grad:
        raise RuntimeError("tensor was not produced by a recorded forward pass")
    if grad is None:
        if root.value.size != 1:
            raise ValueError("backward needs an explicit gradient for non-scalar outputs")
        grad = np.ones_like(root.value)
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    grads: dict[int, np.ndarray] = {id(root): np.asarray(grad, dtype=DTYPE)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            _accumulate(node, g)
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


# -- elementwise -----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.value * b.value, (a, b),
                  lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return Tensor(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.value), (a,), lambda g: (g / a.value,))


def square(a: Tensor) -> Tensor:
    return Tensor(a.value ** 2, (a,), lambda g: (2.0 * g * a.value,))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    pos = a.value > 0
    scale = np.where(pos, 1.0, slope)
    return Tensor(a.value * scale, (a,), lambda g: (g * scale,))


def detach(a: Tensor) -> Tensor:
    return Tensor(a.value)


# -- reductions and shape ----------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return Tensor(out, (a,), back)


def mean(a: Tensor) -> Tensor:
    n = a.value.size
    return Tensor(a.value.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [_wrap(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]
    return Tensor(np.concatenate([p.value for p in parts], axis=axis), tuple(parts),
                  lambda g: tuple(np.split(g, cuts, axis=axis)))


def take(a: Tensor, index) -> Tensor:
    """Row gather / basic indexing; repeated rows accumulate gradient."""
    out = a.value[index]

    def back(g):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        return (full,)

    return Tensor(out, (a,), back)


def where(mask: np.ndarray, a: Tensor, fill: float) -> Tensor:
    """``a`` where ``mask`` holds, a constant elsewhere (no gradient there)."""
    mask = np.asarray(mask, dtype=bool)
    return Tensor(np.where(mask, a.value, fill), (a,), lambda g: (np.where(mask, g, 0.0),))


# -- segment operations (graph batching) ----------------------------------------------

def segment_sum(a: Tensor, segments: np.ndarray, n: int) -> Tensor:
    out = np.zeros((n,) + a.shape[1:])
    np.add.at(out, segments, a.value)
    return Tensor(out, (a,), lambda g: (g[segments],))


def _segment_order(segments: np.ndarray):
    order = np.argsort(segments, kind="stable")
    sorted_seg = segments[order]
    starts = np.flatnonzero(np.r_[True, sorted_seg[1:] != sorted_seg[:-1]]) if len(order) else np.array([], int)
    return order, sorted_seg, starts


def segment_max(a: Tensor, segments: np.ndarray, n: int, empty: float = 0.0) -> Tensor:
    """Per-segment, per-component maximum of rows of ``a``.

    Segments without rows get ``empty``. The gradient of each output
    component flows to the first row (lowest index) attaining the maximum.
    """
    segments = np.asarray(segments, dtype=np.int64)
    out = np.full((n,) + a.shape[1:], empty, dtype=DTYPE)
    if len(segments) == 0:
        return Tensor(out, (a,), lambda g: (np.zeros_like(a.value),))
    order, sorted_seg, starts = _segment_order(segments)
    vals = a.value[order]
    seg_max = np.maximum.reduceat(vals, starts, axis=0)
    seg_ids = sorted_seg[starts]
    out[seg_ids] = seg_max
    # argmax with lowest original index on ties: rows are sorted stably, so
    # the first hit in sorted order is the lowest index
    expanded = seg_max[np.searchsorted(starts, np.arange(len(order)), side="right") - 1]
    pos = np.arange(len(order)).reshape((-1,) + (1,) * (vals.ndim - 1))
    hit = np.where(vals == expanded, pos, len(order))
    first = np.minimum.reduceat(hit, starts, axis=0)
    arg = order[first]  # (segments_present, ...) original row per component

    def back(g):
        full = np.zeros_like(a.value)
        gs = g[seg_ids]
        cols = np.indices(arg.shape)[1:]
        full[(arg,) + tuple(cols)] = gs
        return (full,)

    return Tensor(out, (a,), back)


def segment_softmax(logits: Tensor, segments: np.ndarray, n: int) -> Tensor:
    """Softmax of a column of logits within each segment."""
    segments = np.asarray(segments, dtype=np.int64)
    shift = np.full((n,) + logits.shape[1:], -np.inf)
    np.maximum.at(shift, segments, logits.value)
    z = np.exp(logits.value - shift[segments])
    denom = np.zeros((n,) + logits.shape[1:])
    np.add.at(denom, segments, z)
    p = z / denom[segments]

    def back(g):
        s = np.zeros((n,) + logits.shape[1:])
        np.add.at(s, segments, g * p)
        return (p * (g - s[segments]),)

    return Tensor(p, (logits,), back)


def log_softmax(logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise log-softmax of a 2-D tensor; masked-out entries get -inf and no gradient."""
    x = logits.value
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ValueError("every row needs at least one unmasked entry")
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
    out = x - lse
    p = np.exp(out)

    def back(g):
        gm = np.where(np.isfinite(out), g, 0.0)
        grad = gm - p * gm.sum(axis=-1, keepdims=True)
        if mask is not None:
            grad = np.where(mask, grad, 0.0)
        return (grad,)

    return Tensor(out, (logits,), back)


def segment_log_softmax(logits: Tensor, segments: np.ndarray, n: int, mask: np.ndarray | None = None) -> Tensor:
    """Log-softmax of a 1-D logit vector within segments, honouring a boolean mask."""
    segments = np.asarray(segments, dtype=np.int64)
    x = logits.value
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    shift = np.full(n, -np.inf)
    np.maximum.at(shift, segments, x)
    safe = np.where(np.isfinite(shift), shift, 0.0)
    z = np.exp(x - safe[segments])
    denom = np.zeros(n)
    np.add.at(denom, segments, z)
    lse = safe + np.log(np.where(denom > 0, denom, 1.0))
    out = x - lse[segments]
    p = np.exp(out)

    def back(g):
        gm = np.where(np.isfinite(out), g, 0.0)
        s = np.zeros(n)
        np.add.at(s, segments, gm)
        grad = gm - p * s[segments]
        if mask is not None:
            grad = np.where(mask, grad, 0.0)
        return (grad,)

    return Tensor(out, (logits,), back)


def logsumexp(a: Tensor, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    x = a.value if mask is None else np.where(mask, a.value, -np.inf)
    m = x.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(x - m).sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    p = np.exp(x - m) / s

    def back(g):
        return (np.expand_dims(g, axis) * p,)

    return Tensor(out, (a,), back)
