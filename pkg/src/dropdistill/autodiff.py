"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Every operation validates that its output is finite; NaN/Inf anywhere is a hard
error so downstream metric comparisons never average garbage. Gradients are
accumulated on leaves only; intermediate adjoints live in a per-sweep buffer,
so repeated backward calls accumulate into leaf ``grad`` without double
counting shared subexpressions.
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(ArithmeticError):
    """Raised when a forward value contains NaN or Inf."""


def _check_finite(arr, what="tensor"):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values encountered in {what}")


class Tensor:
    """A dense float64 array plus the links needed for reverse-mode AD.

    ``grad`` is populated (for leaves with ``requires_grad``) by sweeping a
    :class:`Tape`; it stays ``None`` until then.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, _parents=(), _backward=None):
        arr = np.asarray(values, dtype=np.float64)
        _check_finite(arr)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self):
        return float(self.values)

    def detach(self):
        """A view on the same values with no gradient tracking."""
        t = Tensor.__new__(Tensor)
        t.values = self.values
        t.requires_grad = False
        t.grad = None
        t._parents = ()
        t._backward = None
        return t

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values, parents, backward, what):
    """Wrap an op result; the backward rule is kept only when a parent needs it."""
    _check_finite(values, what)
    if any(p.requires_grad for p in parents):
        return Tensor(values, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(values)


def _unbroadcast(g, shape):
    # Sum the gradient back down to `shape` (inverse of numpy broadcasting).
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitive operations


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values + b.values

    def backward(g, accum):
        accum(a, _unbroadcast(g, a.values.shape))
        accum(b, _unbroadcast(g, b.values.shape))

    return _make(out, (a, b), backward, "add")


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values - b.values

    def backward(g, accum):
        accum(a, _unbroadcast(g, a.values.shape))
        accum(b, _unbroadcast(-g, b.values.shape))

    return _make(out, (a, b), backward, "sub")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values * b.values

    def backward(g, accum):
        accum(a, _unbroadcast(g * b.values, a.values.shape))
        accum(b, _unbroadcast(g * a.values, b.values.shape))

    return _make(out, (a, b), backward, "mul")


def matmul(a, b):
    """Matrix product of two 2-D tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.values.shape[1] != b.values.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {a.values.shape} @ {b.values.shape}"
        )
    out = a.values @ b.values

    def backward(g, accum):
        accum(a, g @ b.values.T)
        accum(b, a.values.T @ g)

    return _make(out, (a, b), backward, "matmul")


def spmm(src, dst, weights, x, num_out=None):
    """Sparse aggregation: ``out[i] = sum over edges (j -> i) of w_ji * x[j]``.

    ``weights`` may be a plain array (constant) or a Tensor, in which case
    gradients flow to the edge weights as well as to ``x``.
    """
    x = _as_tensor(x)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    w = _as_tensor(weights)
    if x.values.ndim != 2:
        raise ValueError("spmm expects a 2-D feature tensor")
    if w.values.shape != src.shape or src.shape != dst.shape:
        raise ValueError("spmm edge arrays and weights must share one length")
    n_in = x.values.shape[0]
    n_out = n_in if num_out is None else int(num_out)
    if src.size and (src.min() < 0 or src.max() >= n_in or dst.min() < 0 or dst.max() >= n_out):
        raise ValueError("spmm edge endpoint out of range")
    out = np.zeros((n_out, x.values.shape[1]))
    if src.size:
        np.add.at(out, dst, w.values[:, None] * x.values[src])

    def backward(g, accum):
        if x.requires_grad:
            gx = np.zeros_like(x.values)
            if src.size:
                np.add.at(gx, src, w.values[:, None] * g[dst])
            accum(x, gx)
        if w.requires_grad:
            gw = (g[dst] * x.values[src]).sum(axis=1) if src.size else np.zeros_like(w.values)
            accum(w, gw)

    return _make(out, (w, x), backward, "spmm")


def index_rows(x, idx):
    """Row gather ``x[idx]`` with scatter-add backward."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = x.values[idx]

    def backward(g, accum):
        gx = np.zeros_like(x.values)
        np.add.at(gx, idx, g)
        accum(x, gx)

    return _make(out, (x,), backward, "index_rows")


def gather_rows(x, rows, cols):
    """Elementwise gather ``x[rows[k], cols[k]]`` producing a 1-D tensor."""
    x = _as_tensor(x)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    out = x.values[rows, cols]

    def backward(g, accum):
        gx = np.zeros_like(x.values)
        np.add.at(gx, (rows, cols), g)
        accum(x, gx)

    return _make(out, (x,), backward, "gather_rows")


def concat_cols(tensors):
    tensors = [_as_tensor(t) for t in tensors]
    widths = [t.values.shape[1] for t in tensors]
    out = np.concatenate([t.values for t in tensors], axis=1)

    def backward(g, accum):
        offset = 0
        for t, w in zip(tensors, widths):
            accum(t, g[:, offset:offset + w])
            offset += w

    return _make(out, tuple(tensors), backward, "concat_cols")


def reshape(x, shape):
    x = _as_tensor(x)
    out = x.values.reshape(shape)

    def backward(g, accum):
        accum(x, g.reshape(x.values.shape))

    return _make(out, (x,), backward, "reshape")


def tsum(x):
    """Sum of all entries, as a 0-d tensor."""
    x = _as_tensor(x)
    out = np.asarray(x.values.sum())

    def backward(g, accum):
        accum(x, np.broadcast_to(g, x.values.shape).copy())

    return _make(out, (x,), backward, "sum")


def mean_all(x):
    x = _as_tensor(x)
    return mul(tsum(x), 1.0 / x.values.size)


def relu(x):
    x = _as_tensor(x)
    out = np.maximum(x.values, 0.0)

    def backward(g, accum):
        accum(x, g * (x.values > 0))

    return _make(out, (x,), backward, "relu")


def elu(x):
    x = _as_tensor(x)
    neg = x.values < 0
    out = np.where(neg, np.expm1(x.values), x.values)

    def backward(g, accum):
        accum(x, g * np.where(neg, out + 1.0, 1.0))

    return _make(out, (x,), backward, "elu")


def leaky_relu(x, negative_slope=0.2):
    x = _as_tensor(x)
    neg = x.values < 0
    out = np.where(neg, negative_slope * x.values, x.values)

    def backward(g, accum):
        accum(x, g * np.where(neg, negative_slope, 1.0))

    return _make(out, (x,), backward, "leaky_relu")


def log_softmax_rows(x):
    x = _as_tensor(x)
    if x.values.ndim != 2:
        raise ValueError("log_softmax_rows expects a 2-D tensor")
    shifted = x.values - x.values.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def backward(g, accum):
        soft = np.exp(out)
        accum(x, g - soft * g.sum(axis=1, keepdims=True))

    return _make(out, (x,), backward, "log_softmax_rows")


def segment_softmax(scores, segments, num_segments):
    """Softmax over groups of entries sharing a segment id.

    Every segment in ``[0, num_segments)`` must own at least one entry; the
    per-segment outputs sum to one.
    """
    scores = _as_tensor(scores)
    segments = np.asarray(segments, dtype=np.int64)
    if scores.values.ndim != 1 or scores.values.shape != segments.shape:
        raise ValueError("segment_softmax expects matching 1-D scores and segments")
    counts = np.bincount(segments, minlength=num_segments)
    if len(counts) != num_segments or counts.min() == 0:
        raise ValueError("segment_softmax: empty segment")
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, segments, scores.values)
    ex = np.exp(scores.values - seg_max[segments])
    denom = np.bincount(segments, weights=ex, minlength=num_segments)
    out = ex / denom[segments]

    def backward(g, accum):
        dot = np.bincount(segments, weights=g * out, minlength=num_segments)
        accum(scores, out * (g - dot[segments]))

    return _make(out, (scores,), backward, "segment_softmax")


# ---------------------------------------------------------------------------
# losses


def _mask_indices(mask, n):
    if mask is None:
        idx = np.arange(n)
    else:
        idx = np.flatnonzero(np.asarray(mask))
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    return idx


def cross_entropy(logits, labels, mask=None):
    """Mean negative log-likelihood of ``labels`` over the masked rows."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    idx = _mask_indices(mask, logits.values.shape[0])
    c = logits.values.shape[1]
    picked_labels = labels[idx]
    if picked_labels.min() < 0 or picked_labels.max() >= c:
        raise ValueError("label out of class range")
    log_probs = log_softmax_rows(logits)
    picked = gather_rows(log_probs, idx, picked_labels)
    return mul(mean_all(picked), -1.0)


def bce_with_logits(logits, multihot, mask=None):
    """Mean binary cross-entropy over masked rows and all classes."""
    logits = _as_tensor(logits)
    targets = np.asarray(multihot, dtype=np.float64)
    idx = _mask_indices(mask, logits.values.shape[0])
    sub_logits = index_rows(logits, idx)
    y = targets[idx]
    z = sub_logits.values
    # stable softplus form: max(z,0) - z*y + log1p(exp(-|z|))
    terms = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = np.asarray(terms.mean())

    def backward(g, accum):
        sig = 1.0 / (1.0 + np.exp(-z))
        accum(sub_logits, g * (sig - y) / z.size)

    return _make(out, (sub_logits,), backward, "bce_with_logits")


def mse(a, b):
    """Mean squared difference over all entries."""
    d = sub(a, b)
    return mean_all(mul(d, d))


# ---------------------------------------------------------------------------
# tape and backward


def _topo_order(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


class Tape:
    """Topologically ordered record of the operations reaching one output.

    The tape can be swept repeatedly with different output seeds (used to
    extract Jacobian rows); call :meth:`zero_grads` between sweeps unless
    accumulation is wanted.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self._order = _topo_order(root)

    def backward(self, seed=None):
        """Propagate ``seed`` (default: 1 for a scalar root) to all leaves."""
        if seed is None:
            if self.root.values.size != 1:
                raise ValueError("backward of a non-scalar requires an explicit seed")
            seed = np.ones_like(self.root.values)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.root.values.shape:
            raise ValueError("seed shape must match the tape root")
        if not self.root.requires_grad:
            return
        adjoint = {id(self.root): seed}

        def accum(t, delta):
            if not t.requires_grad:
                return
            key = id(t)
            if key in adjoint:
                adjoint[key] = adjoint[key] + delta
            else:
                adjoint[key] = delta

        for node in reversed(self._order):
            g = adjoint.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                node._backward(g, accum)
            else:
                node.grad = g if node.grad is None else node.grad + g

    def zero_grads(self):
        for node in self._order:
            node.grad = None

    def leaves(self):
        return [n for n in self._order if n._backward is None and n.requires_grad]


def backward(loss: Tensor):
    """Populate ``grad`` on every requires-grad leaf reachable from ``loss``."""
    if loss.values.size != 1:
        raise ValueError("backward expects a scalar loss")
    Tape(loss).backward()
