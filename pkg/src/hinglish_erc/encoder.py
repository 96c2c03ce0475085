"""Sentence encoders standing in for a fine-tunable pre-trained encoder."""

from __future__ import annotations

import json
import unicodedata
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import neuralcore as nc
from .errors import DataError
from .neuralcore import ENCODER_GROUP, Linear, ParamStore, Tensor

FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193


class SentenceEncoder(Protocol):
    dim: int

    def encode(self, text: str) -> np.ndarray: ...

    def encode_batch(self, texts: Sequence[str]) -> Tensor: ...

    def config(self) -> dict: ...


def fnv1a_32(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation."""
    chars = [" " if ch.isspace() or unicodedata.category(ch).startswith("P") else ch for ch in text.lower()]
    return "".join(chars).split()


def bag_of_buckets(text: str, buckets: int) -> np.ndarray:
    vec = np.zeros(buckets)
    for tok in tokenize(text):
        vec[fnv1a_32(tok.encode("utf-8")) % buckets] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class HashedProjectionEncoder:
    """Hashed bag-of-tokens, a fixed seeded projection, then a trainable
    residual layer: ``out = proj + tune(proj)``.

    The tune layer starts at zero so the untrained encoder is the plain
    projection. Its parameters and the empty-text sentinel belong to the
    encoder learning-rate group.
    """

    def __init__(self, store: ParamStore, dim: int = 768, vocab_hash_dim: int = 4096, seed: int = 0):
        self.dim, self.vocab_hash_dim, self.seed = dim, vocab_hash_dim, seed
        self.frozen_projection = np.random.default_rng(seed).normal(size=(vocab_hash_dim, dim))
        self.tune = Linear(store, "encoder.tune", dim, dim, group=ENCODER_GROUP)
        self.tune.weight.data[...] = 0.0
        self.sentinel = store.normal("encoder.sentinel", (dim,), 0.02, ENCODER_GROUP)
        self._proj_cache: dict[str, np.ndarray] = {}

    def config(self) -> dict:
        return {"type": "hashed", "dim": self.dim, "vocab_hash_dim": self.vocab_hash_dim, "seed": self.seed}

    def project(self, text: str) -> np.ndarray:
        proj = self._proj_cache.get(text)
        if proj is None:
            proj = bag_of_buckets(text, self.vocab_hash_dim) @ self.frozen_projection
            self._proj_cache[text] = proj
        return proj

    def encode_batch(self, texts: Sequence[str]) -> Tensor:
        proj = np.stack([self.project(t) if t else np.zeros(self.dim) for t in texts])
        empty = np.array([[0.0] if t else [1.0] for t in texts])
        p = Tensor(proj)
        tuned = nc.add(p, self.tune(p))
        if not empty.any():
            return tuned
        sentinel = nc.reshape(self.sentinel, (1, self.dim))
        return nc.add(nc.mul(tuned, 1.0 - empty), nc.mul(sentinel, empty))

    def encode(self, text: str) -> np.ndarray:
        return self.encode_batch([text]).data[0].copy()


class PrecomputedEncoder:
    """Lookup table of externally computed sentence vectors. No trainable
    parameters; unknown text is an error in strict mode and maps to the
    sentinel (the "" row if present, else zeros) in lenient mode."""

    def __init__(self, table: dict[str, np.ndarray], strict: bool = True, path: str | None = None):
        dims = {v.shape[0] for v in table.values()}
        if len(dims) > 1:
            raise DataError(f"inconsistent vector dimensions {sorted(dims)}")
        if not dims:
            raise DataError("precomputed embedding table is empty")
        self.table, self.strict, self.path = table, strict, path
        self.dim = dims.pop()
        self.sentinel = table.get("", np.zeros(self.dim))

    def config(self) -> dict:
        return {"type": "precomputed", "path": self.path, "strict": self.strict}

    def encode(self, text: str) -> np.ndarray:
        vec = self.table.get(text)
        if vec is None:
            if self.strict and text:
                raise DataError(f"no precomputed embedding for text {text[:60]!r}")
            vec = self.sentinel
        return vec.copy()

    def encode_batch(self, texts: Sequence[str]) -> Tensor:
        return Tensor(np.stack([self.encode(t) for t in texts]))


def load_precomputed(path: str | Path, strict: bool = True) -> PrecomputedEncoder:
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file not found: {path}")
    table: dict[str, np.ndarray] = {}
    dim = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                text, vec = rec["text"], np.asarray(rec["vec"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad embedding record ({exc})") from None
            if vec.ndim != 1 or not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: vec must be a finite 1-D list")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise DataError(f"{path}:{lineno}: dimension {vec.shape[0]} differs from {dim}")
            if text in table:
                raise DataError(f"{path}:{lineno}: duplicate text key {text[:60]!r}")
            table[text] = vec
    return PrecomputedEncoder(table, strict=strict, path=str(path))


def write_precomputed(table: dict[str, np.ndarray], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for text, vec in table.items():
            fh.write(json.dumps({"text": text, "vec": [float(x) for x in vec]}, ensure_ascii=False) + "\n")


def build_encoder(cfg: dict, store: ParamStore) -> SentenceEncoder:
    kind = cfg.get("type", "hashed")
    if kind == "hashed":
        return HashedProjectionEncoder(
            store, dim=cfg.get("dim", 768), vocab_hash_dim=cfg.get("vocab_hash_dim", 4096), seed=cfg.get("seed", 0)
        )
    if kind == "precomputed":
        return load_precomputed(cfg["path"], strict=cfg.get("strict", True))
    raise ValueError(f"unknown encoder type {kind!r}")


def parse_encoder_spec(spec: str, dim: int = 768, seed: int = 0, lenient: bool = False, vocab_hash_dim: int = 4096) -> dict:
    """CLI form: ``hashed`` or ``precomputed:<path>``."""
    if spec == "hashed":
        return {"type": "hashed", "dim": dim, "vocab_hash_dim": vocab_hash_dim, "seed": seed}
    if spec.startswith("precomputed:"):
        return {"type": "precomputed", "path": spec.split(":", 1)[1], "strict": not lenient}
    raise ValueError(f"encoder must be 'hashed' or 'precomputed:<path>', got {spec!r}")
