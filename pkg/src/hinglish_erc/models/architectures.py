"""The three network architectures behind the four base models.

All forwards take a batch of context windows and return logits [n, k];
the softmax head is applied by callers that need probabilities, while the
training loss works on logits directly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .. import neuralcore as nc
from ..corpus import ContextWindow, EmotionLabelSet
from ..encoder import SentenceEncoder
from ..neuralcore import BatchNorm1d, Embedding, GRUStack, Linear, MultiHeadAttention, ParamStore, Tensor

SIMPLE = "simple_history"
SIMPLE_AUG = "simple_history_aug"
FULL = "full_history"
GRU = "context_gru"
KINDS = (SIMPLE, SIMPLE_AUG, FULL, GRU)


@dataclass(frozen=True)
class ModelDims:
    d_enc: int = 768
    emotion_dim: int = 50
    heads: int = 8
    simple_hidden: int = 256
    history_hidden: int = 256
    history_out: int = 128
    full_hidden1: int = 512
    full_hidden2: int = 128
    gru_hidden: int = 256
    gru_layers: int = 2
    gru_cls_hidden: int = 256
    window: int = 3
    dropout: float = 0.25
    leaky_slope: float = 0.01
    vocab_hash_dim: int = 4096
    gru_includes_next: bool = True

    @classmethod
    def desk(cls, **overrides) -> "ModelDims":
        """Laptop-scale dimensions (d_enc=32) for tests and quick runs."""
        base = dict(
            d_enc=32,
            emotion_dim=8,
            simple_hidden=64,
            history_hidden=16,
            history_out=8,
            full_hidden1=32,
            full_hidden2=8,
            gru_hidden=16,
            gru_cls_hidden=16,
            vocab_hash_dim=256,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Output:
    logits: Tensor
    attention: Tensor | None = None


def _last_previous(w: ContextWindow) -> str:
    return w.previous[-1] if w.previous else ""


class SimpleHistoryNet:
    """Current sentence attends over the previous one (keys from the
    previous sentence, queries and values from the current); the attended
    vector is joined with the previous emotion's embedding and classified."""

    window_prev: int | None = 1
    use_next = False
    uses_emotion = True

    def __init__(self, store: ParamStore, dims: ModelDims, labels: EmotionLabelSet, encoder: SentenceEncoder):
        self.dims, self.labels, self.encoder = dims, labels, encoder
        d, e = dims.d_enc, dims.emotion_dim
        self.attention = MultiHeadAttention(store, "attention", d, dims.heads)
        self.emotion_embedding = Embedding(store, "emotion_embedding", len(labels) + 1, e)
        self.classifier = [
            Linear(store, "classifier.0", d + e, dims.simple_hidden),
            Linear(store, "classifier.1", dims.simple_hidden, len(labels)),
        ]

    def _context(self, windows, no_context):
        if no_context:
            return [""] * len(windows), [self.labels.start_sentinel] * len(windows)
        return [_last_previous(w) for w in windows], [w.previous_emotion for w in windows]

    def attend(self, windows, no_context=False):
        prev_texts, prev_emotions = self._context(windows, no_context)
        n, d = len(windows), self.dims.d_enc
        cur = nc.reshape(self.encoder.encode_batch([w.current for w in windows]), (n, 1, d))
        prev = nc.reshape(self.encoder.encode_batch(prev_texts), (n, 1, d))
        attended, weights = self.attention(cur, prev, cur)
        emo = self.emotion_embedding([self.labels.emotion_index(e) for e in prev_emotions])
        return nc.reshape(attended, (n, d)), emo, weights

    def forward(self, windows: Sequence[ContextWindow], training=False, rng=None, no_context=False) -> Output:
        if any(len(w.previous) > 1 for w in windows):
            raise ValueError("simple-history windows carry at most one previous sentence")
        attended, emo, weights = self.attend(windows, no_context)
        h = nc.leaky_relu(self.classifier[0](nc.concat([attended, emo], axis=1)), self.dims.leaky_slope)
        return Output(self.classifier[1](h), weights)


class FullHistoryNet(SimpleHistoryNet):
    """Simple-history branch plus the joined text of every previous sentence
    pushed through a small feed-forward network."""

    window_prev = None

    def __init__(self, store: ParamStore, dims: ModelDims, labels: EmotionLabelSet, encoder: SentenceEncoder):
        self.dims, self.labels, self.encoder = dims, labels, encoder
        d, e = dims.d_enc, dims.emotion_dim
        # every bias whose only path to the loss is a linear map into batch
        # norm is cancelled by it and would never train
        self.attention = MultiHeadAttention(store, "attention", d, dims.heads, value_bias=False)
        self.emotion_embedding = Embedding(store, "emotion_embedding", len(labels) + 1, e)
        self.history_ffn_in = Linear(store, "history_ffn.0", d, dims.history_hidden, bias=False)
        self.history_ffn_bn = BatchNorm1d(store, "history_ffn.bn", dims.history_hidden)
        self.history_ffn_out = Linear(store, "history_ffn.1", dims.history_hidden, dims.history_out, bias=False)
        self.classifier_in = Linear(store, "classifier.0", dims.history_out + d + e, dims.full_hidden1, bias=False)
        self.classifier_bn = BatchNorm1d(store, "classifier.bn", dims.full_hidden1)
        self.classifier_mid = Linear(store, "classifier.1", dims.full_hidden1, dims.full_hidden2)
        self.classifier_out = Linear(store, "classifier.2", dims.full_hidden2, len(labels))

    def forward(self, windows, training=False, rng=None, no_context=False) -> Output:
        dims = self.dims
        attended, emo, weights = self.attend(windows, no_context)
        history = [("" if no_context else " ".join(w.previous)) for w in windows]
        h = self.encoder.encode_batch(history)
        h = self.history_ffn_bn(self.history_ffn_in(h), training)
        h = nc.dropout(nc.leaky_relu(h, dims.leaky_slope), dims.dropout, training, rng)
        h = self.history_ffn_out(h)
        z = nc.concat([h, attended, emo], axis=1)
        z = self.classifier_bn(self.classifier_in(z), training)
        z = nc.dropout(nc.leaky_relu(z, dims.leaky_slope), dims.dropout, training, rng)
        z = nc.dropout(nc.relu(self.classifier_mid(z)), dims.dropout, training, rng)
        return Output(self.classifier_out(z), weights)


class ContextGRUNet:
    """Up to ``window`` previous sentences, the current and the next one run
    through a stacked GRU; the two layers' final states self-attend. No
    previous-emotion input."""

    use_next = True
    uses_emotion = False

    def __init__(self, store: ParamStore, dims: ModelDims, labels: EmotionLabelSet, encoder: SentenceEncoder):
        self.dims, self.labels, self.encoder = dims, labels, encoder
        d, hdim = dims.d_enc, dims.gru_hidden
        self.window_prev = dims.window
        self.gru = GRUStack(store, "gru", d, hdim, dims.gru_layers, dims.dropout)
        self.projection = Linear(store, "projection", d, hdim)
        self.attention = MultiHeadAttention(store, "attention", hdim, dims.heads)
        width = hdim + dims.gru_layers * hdim + 2 * hdim
        self.classifier = [
            Linear(store, "classifier.0", width, dims.gru_cls_hidden),
            Linear(store, "classifier.1", dims.gru_cls_hidden, len(labels)),
        ]

    def sequence(self, w: ContextWindow, no_context=False) -> list[str]:
        prev = [] if no_context else list(w.previous)
        if len(prev) > self.dims.window:
            raise ValueError(f"GRU window has {len(prev)} previous sentences (max {self.dims.window})")
        seq = prev + [w.current]
        if self.dims.gru_includes_next:
            seq.append("" if no_context or w.next is None else w.next)
        return seq

    def _forward_group(self, windows, training, rng, no_context):
        dims, n = self.dims, len(windows)
        seqs = [self.sequence(w, no_context) for w in windows]
        steps = len(seqs[0])
        flat = self.encoder.encode_batch([t for s in seqs for t in s])
        _, finals = self.gru(nc.reshape(flat, (n, steps, dims.d_enc)), training, rng)
        cur = self.encoder.encode_batch([w.current for w in windows])
        nxt = self.encoder.encode_batch(["" if no_context or w.next is None else w.next for w in windows])
        proj_cur = nc.dropout(self.projection(cur), dims.dropout, training, rng)
        proj_next = nc.dropout(self.projection(nxt), dims.dropout, training, rng)
        attended, weights = self.attention(finals, finals, finals)
        z = nc.concat(
            [
                finals[:, -1, :],
                nc.reshape(attended, (n, dims.gru_layers * dims.gru_hidden)),
                proj_cur,
                proj_next,
            ],
            axis=1,
        )
        z = nc.dropout(self.classifier[0](z), dims.dropout, training, rng)
        return self.classifier[1](nc.leaky_relu(z, dims.leaky_slope)), weights

    def forward(self, windows, training=False, rng=None, no_context=False) -> Output:
        # windows with equal sequence length share one batched GRU pass
        groups: dict[int, list[int]] = {}
        for i, w in enumerate(windows):
            groups.setdefault(len(self.sequence(w, no_context)), []).append(i)
        if len(groups) == 1:
            logits, weights = self._forward_group(windows, training, rng, no_context)
            return Output(logits, weights)
        parts, order, weights = [], [], []
        for _, idx in sorted(groups.items()):
            logits, w = self._forward_group([windows[i] for i in idx], training, rng, no_context)
            parts.append(logits)
            weights.append(w.data)
            order.extend(idx)
        inverse = np.argsort(order)
        merged = nc.index(nc.concat(parts, axis=0), inverse)
        return Output(merged, Tensor(np.concatenate(weights, axis=0)[inverse]))


NETWORKS = {SIMPLE: SimpleHistoryNet, SIMPLE_AUG: SimpleHistoryNet, FULL: FullHistoryNet, GRU: ContextGRUNet}
