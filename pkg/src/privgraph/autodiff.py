"""A small reverse-mode differentiation tape over numpy arrays.

Only the operations the graph models need are provided. Every op records
its parents and a closure mapping the output gradient to parent gradients;
:func:`backward` walks the tape in reverse topological order.

Segment operations (``segment_sum``, ``segment_softmax``) reduce through
:func:`scatter_add`, which sums each segment in a fixed sequential order, so
results are bit-reproducible for a fixed edge ordering.
"""

import numpy as np
from scipy import sparse


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return index(self, key)


def param(value):
    return Tensor(np.array(value, copy=True), requires_grad=True)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, fn):
    parents = tuple(parents)
    req = any(p.requires_grad for p in parents)
    return Tensor(value, parents if req else (), fn if req else None, req)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(out):
    """Populate ``.grad`` on every tensor reachable from scalar ``out``."""
    order, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        for p, g in zip(node.parents, node.backward_fn(node.grad)):
            if g is None or not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def tanh(x):
    y = np.tanh(x.value)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x):
    v = x.value
    y = np.empty_like(v, dtype=np.result_type(v, np.float32))
    pos = v >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ez = np.exp(v[~pos])
    y[~pos] = ez / (1.0 + ez)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x):
    mask = x.value > 0
    return _make(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=0.2):
    mask = x.value > 0
    return _make(
        np.where(mask, x.value, slope * x.value),
        (x,),
        lambda g: (np.where(mask, g, slope * g),),
    )


def elu(x):
    v = x.value
    mask = v > 0
    neg = np.expm1(np.minimum(v, 0.0))
    y = np.where(mask, v, neg)
    return _make(y, (x,), lambda g: (np.where(mask, g, g * (neg + 1.0)),))


# ---------------------------------------------------------------------------
# linear algebra and reductions
# ---------------------------------------------------------------------------


def linear(x, w):
    """``x @ w.T``: rows of ``x`` mapped through weight matrix ``w`` (out x in)."""
    x, w = as_tensor(x), as_tensor(w)
    return _make(x.value @ w.value.T, (x, w), lambda g: (g @ w.value, g.T @ x.value))


def matvec(x, v):
    """``x @ v`` for a matrix ``x`` and vector ``v``."""
    x, v = as_tensor(x), as_tensor(v)
    return _make(x.value @ v.value, (x, v), lambda g: (np.outer(g, v.value), x.value.T @ g))


def total(x):
    return _make(np.sum(x.value), (x,), lambda g: (np.full_like(x.value, g),))


class SegmentIndex:
    """An integer index array over ``n`` rows with a cached scatter matrix.

    Scattering runs through a CSR matrix whose rows list entries in ascending
    position, so every sum is accumulated in the same order on every call.
    """

    __slots__ = ("ids", "n", "_matrix")

    def __init__(self, ids, n):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.n = int(n)
        self._matrix = None

    def __len__(self):
        return self.ids.size

    @property
    def matrix(self):
        if self._matrix is None:
            order = np.argsort(self.ids, kind="stable")
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.ids, minlength=self.n), out=indptr[1:])
            self._matrix = sparse.csr_matrix(
                (np.ones(self.ids.size), order, indptr), shape=(self.n, self.ids.size)
            )
        return self._matrix

    def scatter(self, values):
        values = np.asarray(values)
        if values.ndim == 1:
            out = np.bincount(self.ids, weights=values, minlength=self.n)
        else:
            out = self.matrix @ values if self.ids.size else np.zeros((self.n,) + values.shape[1:])
        return out.astype(values.dtype, copy=False)


def as_index(idx, n):
    return idx if isinstance(idx, SegmentIndex) else SegmentIndex(idx, n)


def scatter_add(idx, values, n):
    """``out[idx[k]] += values[k]`` into ``n`` rows."""
    return as_index(idx, n).scatter(values)


def index(x, key):
    if isinstance(key, SegmentIndex) or (isinstance(key, np.ndarray) and key.dtype.kind == "i"):
        key = as_index(key, x.shape[0])
        return _make(x.value[key.ids], (x,), lambda g: (key.scatter(g),))

    def fn(g):
        full = np.zeros_like(x.value)
        full[key] = g
        return (full,)

    return _make(x.value[key], (x,), fn)


def column(x):
    """View a 1-d tensor as an ``(n, 1)`` column for row-wise scaling."""
    return _make(x.value[:, None], (x,), lambda g: (g[:, 0],))


def gather(x, idx):
    """Rows ``x[idx]`` for an integer index array or :class:`SegmentIndex` over ``x``'s rows."""
    if not isinstance(idx, SegmentIndex):
        idx = np.asarray(idx, dtype=np.int64)
    return index(x, idx)


def segment_sum(x, seg, n):
    """Sum rows of ``x`` into ``n`` buckets given by ``seg``."""
    seg = as_index(seg, n)
    return _make(seg.scatter(x.value), (x,), lambda g: (g[seg.ids],))


def segment_max(values, seg, n):
    seg = seg.ids if isinstance(seg, SegmentIndex) else seg
    out = np.full(n, -np.inf, dtype=values.dtype)
    if seg.size and np.all(seg[1:] >= seg[:-1]):
        starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
        out[seg[starts]] = np.maximum.reduceat(values, starts)
    else:
        np.maximum.at(out, seg, values)
    return out


def segment_softmax(logits, seg, n):
    """Softmax of a 1-d ``logits`` within each segment, max-subtracted.

    The max shift is a constant for differentiation purposes; softmax is
    invariant to it.
    """
    seg = as_index(seg, n)
    v = logits.value
    if v.size == 0:
        return _make(v.copy(), (logits,), lambda g: (g,))
    ids = seg.ids
    shift = segment_max(v, ids, n)
    e = np.exp(v - shift[ids])
    alpha = e / seg.scatter(e)[ids]

    def fn(g):
        inner = seg.scatter(alpha * g)
        return (alpha * (g - inner[ids]),)

    return _make(alpha, (logits,), fn)


def softmax_rows(x):
    v = x.value
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), fn)


def stack_columns(cols):
    """Stack 1-d tensors of equal length as columns of a matrix."""
    cols = [as_tensor(c) for c in cols]
    value = np.stack([c.value for c in cols], axis=1)
    return _make(value, cols, lambda g: tuple(g[:, k] for k in range(len(cols))))


def concat_rows(parts):
    parts = [as_tensor(p) for p in parts]
    sizes = np.cumsum([0] + [p.shape[0] for p in parts])
    value = np.concatenate([p.value for p in parts], axis=0)
    return _make(
        value,
        parts,
        lambda g: tuple(g[sizes[k] : sizes[k + 1]] for k in range(len(parts))),
    )


def weighted_bce(p, y, weights, eps=1e-12):
    """Mean of ``-w_i [y_i ln p_i + (1 - y_i) ln(1 - p_i)]`` with log arguments clamped at ``eps``.

    Returns the scalar loss tensor and the per-node contributions.
    """
    pv = p.value
    pos = np.maximum(pv, eps)
    neg = np.maximum(1.0 - pv, eps)
    n = pv.shape[0]
    per_node = weights * (-(y * np.log(pos)) - (1.0 - y) * np.log(neg))
    loss = per_node.sum() / n

    def fn(g):
        dpos = np.where(pv > eps, -y / pos, 0.0)
        dneg = np.where(1.0 - pv > eps, (1.0 - y) / neg, 0.0)
        return (g * weights * (dpos + dneg) / n,)

    return _make(np.asarray(loss), (p,), fn), per_node
