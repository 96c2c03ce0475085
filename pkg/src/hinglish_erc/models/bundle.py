"""Model bundles: architecture + encoder + parameters + label set, and their
on-disk directory form (``manifest.json`` next to a parameter checkpoint)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import neuralcore as nc
from ..corpus import ContextWindow, Conversation, EmotionLabelSet, make_windows, synthetic_windows
from ..encoder import SentenceEncoder, build_encoder
from ..errors import DataError
from ..neuralcore import ParamStore
from .architectures import GRU, KINDS, NETWORKS, SIMPLE, SIMPLE_AUG, ModelDims

MANIFEST_FORMAT = "hinglish-erc-bundle"
MANIFEST_VERSION = 1


@dataclass
class ModelBundle:
    kind: str
    labels: EmotionLabelSet
    dims: ModelDims
    encoder_cfg: dict
    seed: int
    store: ParamStore
    encoder: SentenceEncoder
    net: object
    no_context: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def uses_emotion(self) -> bool:
        return self.net.uses_emotion and not self.no_context

    def windows(self, conv: Conversation, teacher_forcing: bool = True, include_synthetic: bool = False) -> list[ContextWindow]:
        wins = make_windows(conv, self.net.window_prev, self.net.use_next, teacher_forcing)
        if include_synthetic:
            wins = wins + synthetic_windows(conv, wins)
        return wins

    def forward(self, windows, training: bool = False, rng=None):
        return self.net.forward(windows, training=training, rng=rng, no_context=self.no_context)

    def probabilities(self, windows) -> np.ndarray:
        return nc.softmax(self.forward(windows).logits, axis=-1).data

    def manifest(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "kind": self.kind,
            "labels": list(self.labels.labels),
            "dims": self.dims.to_dict(),
            "encoder": self.encoder_cfg,
            "seed": self.seed,
            "no_context": self.no_context,
            "meta": self.meta,
        }


def build_bundle(
    kind: str,
    labels: EmotionLabelSet | None = None,
    dims: ModelDims | None = None,
    encoder_cfg: dict | None = None,
    seed: int = 0,
    no_context: bool = False,
) -> ModelBundle:
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(KINDS)}")
    if no_context and kind not in (SIMPLE, SIMPLE_AUG):
        raise ValueError("the context-free switch applies to the simple-history model only")
    labels = labels or EmotionLabelSet()
    dims = dims or ModelDims()
    if encoder_cfg is None:
        encoder_cfg = {"type": "hashed", "dim": dims.d_enc, "vocab_hash_dim": dims.vocab_hash_dim, "seed": seed}
    store = ParamStore(seed)
    encoder = build_encoder(encoder_cfg, store)
    if encoder.dim != dims.d_enc:
        raise DataError(f"encoder dimension {encoder.dim} differs from model d_enc {dims.d_enc}")
    net = NETWORKS[kind](store, dims, labels, encoder)
    return ModelBundle(kind, labels, dims, encoder_cfg, seed, store, encoder, net, no_context)


def save_bundle(bundle: ModelBundle, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(json.dumps(bundle.manifest(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    nc.save_checkpoint(bundle.store, directory)
    return directory


def load_bundle(directory: str | Path) -> ModelBundle:
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.exists():
        raise DataError(f"no bundle manifest at {path}")
    m = json.loads(path.read_text(encoding="utf-8"))
    if m.get("format") != MANIFEST_FORMAT:
        raise DataError(f"{path} is not a model bundle manifest")
    bundle = build_bundle(
        m["kind"],
        EmotionLabelSet(tuple(m["labels"])),
        ModelDims.from_dict(m["dims"]),
        m["encoder"],
        m["seed"],
        m.get("no_context", False),
    )
    bundle.meta = m.get("meta", {})
    nc.load_checkpoint(bundle.store, directory)
    return bundle


def batch_size_for(kind: str) -> int:
    return 1 if kind == GRU else 4
