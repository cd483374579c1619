"""Reverse-mode automatic differentiation over dense numpy tensors.

The operator set is deliberately closed: matmul, add, mul, scale, transpose,
reshape, narrow, take, shift_seq, gather_last, softmax, layer_norm, gelu,
embedding, dropout, sum/mean, and cross_entropy. Everything the encoder
needs is composed from these, which keeps the gradient-check surface finite.

Graphs are define-by-run: each op returns a new Tensor holding a backward
closure and its parents. `backward(loss)` walks the graph once in reverse
topological order; re-running it on the same loss raises unless the graph
is explicitly reset.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from lusoforge.errors import ContractError, EmptyLossError, ShapeError

_ALLOWED_DTYPES = (np.float32, np.float64)
_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff.

    data is always float32 or float64, row-major. Gradients, when present,
    match the tensor's shape exactly.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_backward_ran")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._backward_ran = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # thin operator sugar; the module-level functions are the real API
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._backward_ran = False
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / structural ops


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * c

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * c)

    return _make(data, (a,), backward)


def sub(a, b) -> Tensor:
    return add(a, scale(_as_tensor(b), -1.0))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading dims."""
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accumulate(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    data = np.transpose(a.data, axes)
    inv = tuple(int(i) for i in np.argsort(axes))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.transpose(g, inv))

    return _make(data, (a,), backward)


def swap_last2(a: Tensor) -> Tensor:
    axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    return transpose(a, axes)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(old))

    return _make(data, (a,), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along `axis`."""
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    data = a.data[index]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            _accumulate(a, full)

    return _make(data, (a,), backward)


def take(a: Tensor, index: int, axis: int) -> Tensor:
    """Select one slice along `axis`, dropping that axis (e.g. CLS pooling)."""
    data = np.take(a.data, index, axis=axis)
    sl = [slice(None)] * a.ndim
    sl[axis] = index
    sl = tuple(sl)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[sl] = g
            _accumulate(a, full)

    return _make(data, (a,), backward)


def shift_seq(a: Tensor, offset: int) -> Tensor:
    """Shift along axis 1 by `offset`, filling vacated positions with zeros.

    out[:, i] = a[:, i - offset]; used to express 1-D convolutions as a sum
    of shifted matmuls.
    """
    data = np.zeros_like(a.data)
    if offset == 0:
        data = a.data.copy()
    elif offset > 0:
        data[:, offset:] = a.data[:, :-offset]
    else:
        data[:, :offset] = a.data[:, -offset:]

    def backward(g):
        if a.requires_grad:
            gin = np.zeros_like(g)
            if offset == 0:
                gin = g
            elif offset > 0:
                gin[:, :-offset] = g[:, offset:]
            else:
                gin[:, -offset:] = g[:, :offset]
            _accumulate(a, gin)

    return _make(data, (a,), backward)


def gather_last(a: Tensor, index: np.ndarray) -> Tensor:
    """Gather along the last axis with a shared 2-D index matrix.

    a has shape [..., q, B]; index has shape [q, m] with entries in [0, B).
    out[..., i, j] = a[..., i, index[i, j]]. Backward scatter-adds.
    """
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 2 or index.shape[0] != a.shape[-2]:
        raise ShapeError(f"gather_last index {index.shape} incompatible with {a.shape}")
    idx = np.broadcast_to(index, a.shape[:-1] + (index.shape[1],))
    data = np.take_along_axis(a.data, idx, axis=-1)

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            flat = ga.reshape(-1, a.shape[-2], a.shape[-1])
            gflat = g.reshape(-1, index.shape[0], index.shape[1])
            n = flat.shape[0]
            rows = np.arange(index.shape[0])[None, :, None]
            batch = np.arange(n)[:, None, None]
            np.add.at(flat, (batch, rows, index[None, :, :]), gflat)
            _accumulate(a, flat.reshape(a.data.shape))

    return _make(data, (a,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup into an embedding table; ids is an integer ndarray."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding ids out of range [0, {table.shape[0]}): "
            f"min={ids.min()} max={ids.max()}"
        )
    data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
            _accumulate(table, gt)

    return _make(data, (table,), backward)


# ---------------------------------------------------------------------------
# nonlinearities and normalization


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax; rows sum to 1 along `axis`. NaN input propagates."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * data).sum(axis=axis, keepdims=True)
            _accumulate(a, data * (g - dot))

    return _make(data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact-erf GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    x = a.data
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    data = x * phi

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
            _accumulate(a, g * (phi + x * pdf))

    return _make(data.astype(x.dtype, copy=False), (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-7) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            _accumulate(gain, (g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            _accumulate(x, (gx - m1 - xhat * m2) * inv)

    return _make(data.astype(x.dtype, copy=False), (x, gain, bias), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout. rng=None means evaluation: identity, no RNG draw."""
    if rng is None or rate <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    data = a.data * keep

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * keep)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# reductions and losses


def tensor_sum(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.full_like(a.data, g))

    return _make(data, (a,), backward)


def tensor_mean(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.full_like(a.data, g / n))

    return _make(data, (a,), backward)


def cross_entropy(
    logits: Tensor,
    labels: np.ndarray,
    ignore_index: int = -100,
    reduction: str = "mean",
) -> Tensor:
    """Negative log-likelihood over rows whose label != ignore_index.

    logits: [N, V]; labels: int array [N]. reduction "mean" divides by the
    number of contributing rows; "sum" leaves the raw total (useful when an
    outer loop does its own weighting, e.g. gradient accumulation).
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"cross_entropy got logits {logits.shape} vs labels {labels.shape}")
    active = labels != ignore_index
    count = int(active.sum())
    if count == 0:
        raise EmptyLossError("cross_entropy: every label is ignored; empty loss")

    x = logits.data
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    rows = np.nonzero(active)[0]
    nll = lse[rows] - x[rows, labels[rows]]
    total = nll.sum()
    denom = count if reduction == "mean" else 1
    data = np.asarray(total / denom, dtype=x.dtype)

    def backward(g):
        if logits.requires_grad:
            gl = np.zeros_like(x)
            sub = x[rows]
            sub = np.exp(sub - sub.max(axis=1, keepdims=True))
            probs = sub / sub.sum(axis=1, keepdims=True)
            probs[np.arange(rows.size), labels[rows]] -= 1.0
            gl[rows] = probs * (g / denom)
            _accumulate(logits, gl)

    out = _make(data, (logits,), backward)
    return out


# ---------------------------------------------------------------------------
# graph traversal


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def backward(loss: Tensor):
    """Populate .grad for every requires_grad tensor reachable from `loss`.

    loss must be a scalar. The graph is single-use: a second backward on the
    same loss raises unless reset_graph() was called in between.
    """
    if loss.data.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._backward_ran:
        raise ContractError("backward already ran on this graph; call reset_graph first")
    order = _toposort(loss)
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(order):
        node._backward_ran = True
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    return loss


def reset_graph(loss: Tensor):
    """Clear intermediate grads and the consumed flag so the same graph can
    be walked again. Leaf (parameter) grads are left untouched."""
    for node in _toposort(loss):
        node._backward_ran = False
        if node._parents:
            node.grad = None
    loss.grad = None
