"""Reverse-mode automatic differentiation over float64 numpy arrays.

Each op returns a new :class:`Tensor` holding its parents and a closure that pushes
the output gradient back to them; :meth:`Tensor.backward` replays the closures in
reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

LEAKY_SLOPE = 0.2


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        parents: tuple[Tensor, ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        requires_grad: bool = False,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other) -> Tensor:
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> Tensor:
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other) -> Tensor:
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other) -> Tensor:
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return Tensor(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: a._accumulate(-g))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor(a.data * b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return Tensor(a.data @ b.data, (a, b), backward)


def sparse_matmul(m: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times a dense tensor."""
    m = sp.csr_matrix(m)
    if m.shape[1] != x.shape[0]:
        raise ValueError(f"sparse_matmul shape mismatch {m.shape} @ {x.shape}")
    mt = m.T.tocsr()
    return Tensor(m @ x.data, (x,), lambda g: x._accumulate(mt @ g))


def sum_all(a: Tensor) -> Tensor:
    return Tensor(a.data.sum(), (a,), lambda g: a._accumulate(np.broadcast_to(g, a.shape)))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return Tensor(a.data.mean(), (a,), lambda g: a._accumulate(np.broadcast_to(g / n, a.shape)))


def sum_axis(a: Tensor, axis: int) -> Tensor:
    def backward(g):
        a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return Tensor(a.data.sum(axis=axis), (a,), backward)


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    pos = a.data > 0
    return Tensor(np.where(pos, a.data, slope * a.data), (a,), lambda g: a._accumulate(np.where(pos, g, slope * g)))


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, 0.0)


def abs_(a: Tensor) -> Tensor:
    s = np.sign(a.data)
    return Tensor(np.abs(a.data), (a,), lambda g: a._accumulate(g * s))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: a._accumulate(g * out))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data))


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        a._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return Tensor(y, (a,), backward)


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        for p, gp in zip(parts, np.split(g, cuts, axis=axis)):
            p._accumulate(gp)

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return Tensor(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        a._accumulate(out)

    return Tensor(a.data[idx], (a,), backward)


def segment_sum(a: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """out[s] = sum of rows i with seg[i] == s."""
    seg = np.asarray(seg, dtype=np.int64)
    out = np.zeros((n_segments,) + a.shape[1:])
    np.add.at(out, seg, a.data)
    return Tensor(out, (a,), lambda g: a._accumulate(g[seg]))


def segment_softmax(scores: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """Softmax over rows sharing a segment id, independently per column."""
    seg = np.asarray(seg, dtype=np.int64)
    x = scores.data
    mx = np.full((n_segments,) + x.shape[1:], -np.inf)
    np.maximum.at(mx, seg, x)
    e = np.exp(x - mx[seg])
    den = np.zeros_like(mx)
    np.add.at(den, seg, e)
    y = e / den[seg]

    def backward(g):
        gy = g * y
        tot = np.zeros_like(mx)
        np.add.at(tot, seg, gy)
        scores._accumulate(gy - y * tot[seg])

    return Tensor(y, (scores,), backward)


def pairwise_l1(a: Tensor, b: Tensor, chunk: int = 256) -> Tensor:
    """(n, m) matrix of L1 distances between rows of ``a`` (n, d) and ``b`` (m, d)."""
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"pairwise_l1 dimension mismatch {a.shape} vs {b.shape}")
    n = a.shape[0]
    out = np.empty((n, b.shape[0]))
    for s in range(0, n, chunk):
        out[s : s + chunk] = np.abs(a.data[s : s + chunk, None, :] - b.data[None, :, :]).sum(axis=2)

    def backward(g):
        ga = np.zeros_like(a.data)
        gb = np.zeros_like(b.data)
        for s in range(0, n, chunk):
            sign = np.sign(a.data[s : s + chunk, None, :] - b.data[None, :, :])
            weighted = sign * g[s : s + chunk, :, None]
            ga[s : s + chunk] = weighted.sum(axis=1)
            gb -= weighted.sum(axis=0)
        a._accumulate(ga)
        b._accumulate(gb)

    return Tensor(out, (a, b), backward)


def min_axis1(a: Tensor) -> Tensor:
    """Row minimum; the gradient flows to the first arg-min entry."""
    arg = a.data.argmin(axis=1)
    rows = np.arange(a.shape[0])

    def backward(g):
        out = np.zeros_like(a.data)
        out[rows, arg] = g
        a._accumulate(out)

    return Tensor(a.data[rows, arg], (a,), backward)


def clip_min(a: Tensor, lo: float) -> Tensor:
    keep = a.data >= lo
    return Tensor(np.maximum(a.data, lo), (a,), lambda g: a._accumulate(np.where(keep, g, 0.0)))
