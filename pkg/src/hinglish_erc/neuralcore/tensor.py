"""Dense reverse-mode autodiff over numpy arrays.

Every op builds a node holding its parents and a closure mapping the output
gradient to one gradient per parent. ``Tensor.backward`` walks the graph in
reverse topological order and accumulates (``+=``) into leaf ``grad``
buffers, so two backward passes without zeroing double the leaf gradients.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NumericalError

_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype.type


def get_default_dtype():
    return _DTYPE


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=_DTYPE) if not isinstance(data, np.ndarray) or data.dtype != _DTYPE else data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable | None = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite value produced by op '{op}'")
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def neg(a) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _node(ad * bd, (a, b), backward, "mul")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    x = a.data
    # non-finite results are reported by _node
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x)
    return _node(out, (a,), lambda g: (g / x,), "log")


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    scale = np.where(a.data >= 0, 1.0, slope).astype(a.data.dtype)
    return _node(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------- structure


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ValueError("matmul needs operands with at least 2 dimensions")
    if ad.shape[-1] != bd.shape[-2]:
        raise ValueError(f"matmul shape mismatch {ad.shape} @ {bd.shape}")

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _node(ad @ bd, (a, b), backward, "matmul")


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


def index(a: Tensor, key) -> Tensor:
    """Basic or integer-array indexing; the backward scatters with add.at so
    repeated indices accumulate."""
    src_shape, dtype = a.shape, a.data.dtype

    def backward(g):
        out = np.zeros(src_shape, dtype=dtype)
        np.add.at(out, key, g)
        return (out,)

    return _node(a.data[key], (a,), backward, "index")


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _node(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


# ---------------------------------------------------------------- normalisation / losses


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out = ex / ex.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _node(out, (a,), backward, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _node(out, (a,), backward, "log_softmax")


def cross_entropy(logits: Tensor, targets, from_probs: bool = False) -> Tensor:
    """Mean negative log-likelihood of ``targets``.

    With logits (the default) softmax and log are fused through
    log-sum-exp; the gradient is ``(softmax(logits) - onehot) / n``.
    ``from_probs=True`` takes an already-normalised probability matrix.
    """
    targets = np.asarray(targets, dtype=np.int64)
    x = logits.data
    if x.ndim != 2 or targets.shape != (x.shape[0],):
        raise ValueError(f"cross_entropy expects [n,k] scores and n targets, got {x.shape} / {targets.shape}")
    n, k = x.shape
    if n == 0:
        raise ValueError("cross_entropy on an empty batch")
    if targets.min() < 0 or targets.max() >= k:
        raise ValueError(f"target index out of range for {k} classes")
    rows = np.arange(n)
    if from_probs:
        picked = np.maximum(x[rows, targets], np.finfo(x.dtype).tiny)
        loss = max(0.0, float(-np.log(picked).mean()))

        def backward(g):
            out = np.zeros_like(x)
            out[rows, targets] = -1.0 / (n * picked)
            return (out * g,)

        return _node(np.asarray(loss, dtype=x.dtype), (logits,), backward, "cross_entropy")

    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = max(0.0, float((lse - shifted[rows, targets]).mean()))
    probs = np.exp(shifted - lse[:, None])

    def backward(g):
        out = probs.copy()
        out[rows, targets] -= 1.0
        return (out * (g / n),)

    return _node(np.asarray(loss, dtype=x.dtype), (logits,), backward, "cross_entropy")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) at train time."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return mul(x, Tensor(mask))


def batch_norm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Normalise over the batch axis. Returns (output, batch mean, biased var)."""
    xd = x.data
    n = xd.shape[0]
    mu = xd.mean(axis=0)
    var = xd.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv_std
    gd = gamma.data

    def backward(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = g * gd
        dx = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx, dgamma, dbeta

    out = _node(xhat * gd + beta.data, (x, gamma, beta), backward, "batchnorm")
    return out, mu, var


def gru_layer(x: Tensor, w: Tensor, u: Tensor, b: Tensor, h0: np.ndarray | None = None):
    """One GRU layer over a batch of sequences.

    x: [B, T, in]; w: [3h, in]; u: [3h, h]; b: [3h] with gate blocks ordered
    (update z, reset r, candidate). Recurrence:

        z = sigmoid(W_z x + U_z h + b_z)
        r = sigmoid(W_r x + U_r h + b_r)
        c = tanh(W_c x + U_c (r * h) + b_c)
        h' = (1 - z) * h + z * c

    Returns outputs [B, T, h]. Backward is hand-written BPTT.
    """
    xd, wd, ud, bd = x.data, w.data, u.data, b.data
    B, T, _ = xd.shape
    H = ud.shape[1]
    if T == 0:
        raise ValueError("GRU needs at least one timestep")
    if wd.shape[0] != 3 * H or ud.shape != (3 * H, H) or bd.shape != (3 * H,):
        raise ValueError("GRU parameter shapes are inconsistent")
    xw = xd @ wd.T + bd
    uz, ur, uc = ud[:H], ud[H : 2 * H], ud[2 * H :]
    h = np.zeros((B, H), dtype=xd.dtype) if h0 is None else np.broadcast_to(np.asarray(h0, dtype=xd.dtype), (B, H)).copy()
    hs = np.empty((B, T, H), dtype=xd.dtype)
    cache = []
    for t in range(T):
        z = _sigmoid(xw[:, t, :H] + h @ uz.T)
        r = _sigmoid(xw[:, t, H : 2 * H] + h @ ur.T)
        rh = r * h
        c = np.tanh(xw[:, t, 2 * H :] + rh @ uc.T)
        cache.append((h, z, r, rh, c))
        h = (1.0 - z) * h + z * c
        hs[:, t] = h

    def backward(g):
        dx_w = np.zeros((B, T, 3 * H), dtype=xd.dtype)
        du = np.zeros_like(ud)
        dh_next = np.zeros((B, H), dtype=xd.dtype)
        for t in reversed(range(T)):
            h_prev, z, r, rh, c = cache[t]
            dh = g[:, t] + dh_next
            dc = dh * z
            dz = dh * (c - h_prev)
            dh_prev = dh * (1.0 - z)
            da_c = dc * (1.0 - c * c)
            da_z = dz * z * (1.0 - z)
            drh = da_c @ uc
            da_r = drh * h_prev * r * (1.0 - r)
            dh_prev += drh * r + da_z @ uz + da_r @ ur
            du[:H] += da_z.T @ h_prev
            du[H : 2 * H] += da_r.T @ h_prev
            du[2 * H :] += da_c.T @ rh
            dx_w[:, t, :H] = da_z
            dx_w[:, t, H : 2 * H] = da_r
            dx_w[:, t, 2 * H :] = da_c
            dh_next = dh_prev
        flat = dx_w.reshape(B * T, 3 * H)
        dw = flat.T @ xd.reshape(B * T, -1)
        db = flat.sum(axis=0)
        dx = dx_w @ wd
        return dx, dw, du, db

    return _node(hs, (x, w, u, b), backward, "gru")
