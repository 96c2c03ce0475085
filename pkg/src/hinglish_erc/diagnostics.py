"""Whole-architecture gradient checks at desk dimensions."""

from __future__ import annotations

import numpy as np

from . import neuralcore as nc
from .corpus import Conversation, EmotionLabelSet, Utterance
from .models import KINDS, ModelDims, build_bundle
from .neuralcore import GradCheckReport

CHECK_LABELS = EmotionLabelSet(("anger", "contempt", "joy", "neutral"))
CHECK_TEXTS = ("kya baat hai yaar", "haan bilkul", "mujhe nahi pata, sach mein", "chalo theek hai", "arre wah kamaal")


def check_conversation() -> Conversation:
    golds = ("joy", "neutral", "contempt", "neutral", "joy")
    return Conversation("gc", [Utterance("gc", i, t, gold=g) for i, (t, g) in enumerate(zip(CHECK_TEXTS, golds))])


def architecture_gradcheck(kind: str, seed: int = 0, tol: float = 1e-4, max_entries: int | None = 48) -> GradCheckReport:
    """Finite-difference check of every parameter tensor of one architecture.

    The loss is the training-mode cross entropy over four windows; dropout
    masks are redrawn from the same seed on every evaluation so the
    function is deterministic.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    bundle = build_bundle(kind, CHECK_LABELS, ModelDims.desk(), seed=seed)
    windows = bundle.windows(check_conversation())[:4]
    targets = [CHECK_LABELS.index(w.gold) for w in windows]

    def loss():
        out = bundle.forward(windows, training=True, rng=np.random.default_rng(seed))
        return nc.cross_entropy(out.logits, targets)

    return nc.grad_check(loss, list(bundle.store), tol=tol, max_entries=max_entries, seed=seed)
