"""Parameter storage and the layers the four architectures are built from."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor, get_default_dtype

ENCODER_GROUP = "encoder-group"
MAIN_GROUP = "main-group"
GROUPS = (ENCODER_GROUP, MAIN_GROUP)


@dataclass
class Parameter:
    name: str
    tensor: Tensor
    group: str = MAIN_GROUP

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad


class ParamStore:
    """Named parameters plus non-trainable buffers (batch-norm statistics).

    Initialisation draws from a single generator seeded at construction, so
    building the same architecture with the same seed gives identical
    parameters.
    """

    def __init__(self, seed: int = 0):
        self.params: dict[str, Parameter] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.rng = np.random.default_rng(seed)

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def add(self, name: str, data, group: str = MAIN_GROUP) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if group not in GROUPS:
            raise ValueError(f"unknown parameter group {group!r}")
        t = Tensor(np.array(data, dtype=get_default_dtype()), requires_grad=True)
        self.params[name] = Parameter(name, t, group)
        return t

    def uniform(self, name, shape, fan_in, group=MAIN_GROUP) -> Tensor:
        bound = 1.0 / math.sqrt(fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=shape), group)

    def zeros(self, name, shape, group=MAIN_GROUP) -> Tensor:
        return self.add(name, np.zeros(shape), group)

    def normal(self, name, shape, std=0.02, group=MAIN_GROUP) -> Tensor:
        return self.add(name, self.rng.normal(0.0, std, size=shape), group)

    def add_buffer(self, name: str, data) -> np.ndarray:
        if name in self.buffers:
            raise ValueError(f"duplicate buffer name {name!r}")
        self.buffers[name] = np.array(data, dtype=get_default_dtype())
        return self.buffers[name]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.tensor.grad = None

    def group(self, group: str) -> list[Parameter]:
        return [p for p in self.params.values() if p.group == group]

    def snapshot(self) -> dict[str, np.ndarray]:
        snap = {f"param:{k}": p.data.copy() for k, p in self.params.items()}
        snap.update({f"buffer:{k}": v.copy() for k, v in self.buffers.items()})
        return snap

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.tensor.data[...] = snap[f"param:{k}"]
        for k, v in self.buffers.items():
            v[...] = snap[f"buffer:{k}"]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: p.data.shape for k, p in self.params.items()}

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())


class Linear:
    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, group: str = MAIN_GROUP, bias: bool = True):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = store.uniform(f"{name}.weight", (out_dim, in_dim), in_dim, group)
        self.bias = store.zeros(f"{name}.bias", (out_dim,), group) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear_forward(x, self.weight, self.bias)


def linear_forward(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    out = T.matmul(x, T.transpose(weight))
    return out if bias is None else T.add(out, bias)


class Embedding:
    def __init__(self, store: ParamStore, name: str, num: int, dim: int, group: str = MAIN_GROUP):
        self.num, self.dim = num, dim
        self.table = store.normal(f"{name}.weight", (num, dim), 0.02, group)

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.num):
            raise IndexError(f"embedding index out of range for table of {self.num} rows")
        return T.index(self.table, ids)


class MultiHeadAttention:
    """Scaled dot-product attention with ``heads`` heads and an output
    projection. Inputs are [B, L, d] (or [L, d] for a single sequence)."""

    def __init__(self, store: ParamStore, name: str, model_dim: int, heads: int, value_bias: bool = True):
        """``value_bias=False`` drops the value and output biases, which only
        shift the output by a constant vector (useful ahead of batch norm)."""
        if model_dim % heads:
            raise ValueError(f"model_dim {model_dim} is not divisible by heads {heads}")
        self.model_dim, self.heads = model_dim, heads
        self.head_dim = model_dim // heads
        self.q = Linear(store, f"{name}.q", model_dim, model_dim)
        # a key bias shifts every score in a row equally, so softmax cancels it
        self.k = Linear(store, f"{name}.k", model_dim, model_dim, bias=False)
        self.v = Linear(store, f"{name}.v", model_dim, model_dim, bias=value_bias)
        self.out = Linear(store, f"{name}.out", model_dim, model_dim, bias=value_bias)

    def _split(self, x: Tensor) -> Tensor:
        B, L, _ = x.shape
        return T.transpose(T.reshape(x, (B, L, self.heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, q_seq: Tensor, k_seq: Tensor, v_seq: Tensor):
        """Returns (output, attention weights [B, heads, Lq, Lk])."""
        unbatched = q_seq.ndim == 2
        if unbatched:
            q_seq, k_seq, v_seq = (T.reshape(t, (1,) + t.shape) for t in (q_seq, k_seq, v_seq))
        for t in (q_seq, k_seq, v_seq):
            if t.shape[-1] != self.model_dim:
                raise ValueError(f"attention input width {t.shape[-1]} != model_dim {self.model_dim}")
        if k_seq.shape[1] != v_seq.shape[1]:
            raise ValueError("key and value sequences must have equal length")
        B, Lq, _ = q_seq.shape
        q = self._split(self.q(q_seq))
        k = self._split(self.k(k_seq))
        v = self._split(self.v(v_seq))
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.head_dim))
        weights = T.softmax(scores, axis=-1)
        ctx = T.matmul(weights, v)
        merged = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (B, Lq, self.model_dim))
        out = self.out(merged)
        if unbatched:
            out = T.reshape(out, (Lq, self.model_dim))
        return out, weights


class GRUStack:
    """Stacked GRU; dropout between layers in train mode only."""

    def __init__(self, store: ParamStore, name: str, input_dim: int, hidden: int, layers: int = 2, dropout_p: float = 0.0):
        self.input_dim, self.hidden, self.layers, self.dropout_p = input_dim, hidden, layers, dropout_p
        self.cells = []
        for i in range(layers):
            in_dim = input_dim if i == 0 else hidden
            w = store.uniform(f"{name}.l{i}.w", (3 * hidden, in_dim), in_dim)
            u = store.uniform(f"{name}.l{i}.u", (3 * hidden, hidden), hidden)
            b = store.zeros(f"{name}.l{i}.b", (3 * hidden,))
            self.cells.append((w, u, b))

    def __call__(self, seq: Tensor, training: bool = False, rng=None, h0=None):
        """seq [B, T, in] -> (outputs [B, T, h] of the top layer, finals [B, layers, h]).

        ``h0`` (array broadcastable to [B, h]) seeds every layer's initial state.
        """
        if seq.ndim != 3 or seq.shape[1] == 0:
            raise ValueError("GRU input must be [B, T, in] with T >= 1")
        x = seq
        finals = []
        for i, (w, u, b) in enumerate(self.cells):
            if i > 0:
                x = T.dropout(x, self.dropout_p, training, rng)
            x = T.gru_layer(x, w, u, b, h0)
            finals.append(x[:, -1, :])
        return x, T.stack(finals, axis=1)


class BatchNorm1d:
    def __init__(self, store: ParamStore, name: str, dim: int, eps: float = 1e-5, momentum: float = 0.1):
        self.dim, self.eps, self.momentum = dim, eps, momentum
        self.gamma = store.add(f"{name}.gamma", np.ones(dim))
        self.beta = store.zeros(f"{name}.beta", (dim,))
        self.running_mean = store.add_buffer(f"{name}.running_mean", np.zeros(dim))
        self.running_var = store.add_buffer(f"{name}.running_var", np.ones(dim))
        self.tracked = store.add_buffer(f"{name}.num_batches_tracked", np.zeros(1))

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        n = x.shape[0]
        if training and n >= 2:
            out, mu, var = T.batch_norm_train(x, self.gamma, self.beta, self.eps)
            m = self.momentum
            self.running_mean[...] = (1 - m) * self.running_mean + m * mu
            self.running_var[...] = (1 - m) * self.running_var + m * var * n / (n - 1)
            self.tracked += 1
            return out
        if training and self.tracked[0] == 0:
            raise ValueError("batch norm in train mode needs a batch of >= 2 rows before running statistics exist")
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        normed = T.add(T.mul(x, inv), -self.running_mean * inv)
        return T.add(T.mul(normed, self.gamma), self.beta)
