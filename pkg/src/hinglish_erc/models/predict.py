"""Inference over whole conversations, single models and the ensemble."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..corpus import Conversation
from ..errors import DataError
from .architectures import KINDS
from .bundle import ModelBundle, load_bundle

DEFAULT_PRIORITY = ("context_gru", "simple_history", "full_history", "simple_history_aug")


@dataclass
class Prediction:
    label: str
    probs: np.ndarray
    labels: tuple[str, ...]
    per_model_votes: dict[str, str] | None = None

    def to_record(self, cid: str, index: int) -> dict:
        return {
            "cid": cid,
            "index": index,
            "label": self.label,
            "probs": [float(p) for p in self.probs],
            "votes": self.per_model_votes,
        }


def _prediction(bundle: ModelBundle, probs: np.ndarray) -> Prediction:
    labels = bundle.labels.labels
    return Prediction(labels[int(np.argmax(probs))], probs, labels)


def iter_conversation(conv: Conversation, bundle: ModelBundle, forced: Mapping[int, str] | None = None):
    """Yield (window, prediction) in dialogue order.

    Models with a previous-emotion input read the label predicted for the
    previous utterance, never the gold one. ``forced`` overrides the label
    emitted at chosen positions (a test hook for the chaining semantics).
    """
    forced = forced or {}
    windows = bundle.windows(conv, teacher_forcing=False)
    if not bundle.uses_emotion:
        probs = bundle.probabilities(windows)
        for i, w in enumerate(windows):
            pred = _prediction(bundle, probs[i])
            if i in forced:
                pred = replace(pred, label=forced[i])
            yield w, pred
        return
    prev_label = bundle.labels.start_sentinel
    for i, w in enumerate(windows):
        w = replace(w, previous_emotion=prev_label)
        pred = _prediction(bundle, bundle.probabilities([w])[0])
        if i in forced:
            pred = replace(pred, label=forced[i])
        yield w, pred
        prev_label = pred.label


def predict_conversation(conv: Conversation, bundle: ModelBundle, forced: Mapping[int, str] | None = None) -> list[Prediction]:
    return [pred for _, pred in iter_conversation(conv, bundle, forced)]


def ensemble_vote(
    preds: Sequence[Prediction],
    kinds: Sequence[str],
    priority: Sequence[str] = DEFAULT_PRIORITY,
) -> Prediction:
    """Majority vote of four member predictions.

    Ties on vote count go to the tied label with the highest mean member
    probability; remaining ties go to the label voted by the member whose
    kind comes first in ``priority``. The returned probabilities are the
    renormalised member mean, so the label need not be their argmax.
    """
    if len(preds) != 4 or len(kinds) != 4:
        raise ValueError(f"ensemble needs exactly 4 member predictions, got {len(preds)}")
    labels = preds[0].labels
    if any(p.labels != labels for p in preds):
        raise DataError("ensemble members disagree on the label set")
    counts: dict[str, int] = {}
    for p in preds:
        counts[p.label] = counts.get(p.label, 0) + 1
    top = max(counts.values())
    tied = [lab for lab, c in counts.items() if c == top]
    mean = np.mean([p.probs for p in preds], axis=0)
    if len(tied) > 1:
        best = max(mean[labels.index(lab)] for lab in tied)
        tied = [lab for lab in tied if mean[labels.index(lab)] == best]
    if len(tied) > 1:
        rank = {k: i for i, k in enumerate(priority)}
        voters = sorted(range(4), key=lambda m: (rank.get(kinds[m], len(rank)), m))
        winner = next(preds[m].label for m in voters if preds[m].label in tied)
    else:
        winner = tied[0]
    votes = {}
    for k, p in zip(kinds, preds):
        key, n = k, 2
        while key in votes:
            key, n = f"{k}#{n}", n + 1
        votes[key] = p.label
    return Prediction(winner, mean / mean.sum(), labels, votes)


@dataclass
class Ensemble:
    members: list[ModelBundle]
    priority: tuple[str, ...] = DEFAULT_PRIORITY

    def __post_init__(self):
        if len(self.members) != 4:
            raise DataError(f"an ensemble has exactly 4 members, got {len(self.members)}")
        labels = self.members[0].labels
        if any(m.labels != labels for m in self.members):
            raise DataError("ensemble members disagree on the label set")
        unknown = set(self.priority) - set(KINDS)
        if unknown:
            raise DataError(f"unknown kinds in priority order: {sorted(unknown)}")

    @property
    def kinds(self) -> list[str]:
        return [m.kind for m in self.members]

    def predict_conversation(self, conv: Conversation) -> list[Prediction]:
        per_member = [predict_conversation(conv, m) for m in self.members]
        return [ensemble_vote([col[i] for col in per_member], self.kinds, self.priority) for i in range(len(conv))]


def load_ensemble(path: str | Path) -> Ensemble:
    """Manifest: {"members": [bundle dir, ...] (4), "priority": [kind, ...]}.
    Relative member paths resolve against the manifest's directory."""
    path = Path(path)
    try:
        m = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"ensemble manifest not found: {path}") from None
    members = [load_bundle(path.parent / p) for p in m["members"]]
    return Ensemble(members, tuple(m.get("priority", DEFAULT_PRIORITY)))


def write_ensemble_manifest(path: str | Path, member_dirs: Sequence[str], priority: Sequence[str] = DEFAULT_PRIORITY) -> None:
    Path(path).write_text(
        json.dumps({"members": list(member_dirs), "priority": list(priority)}, indent=1) + "\n", encoding="utf-8"
    )


def predictions_for(convs: Sequence[Conversation], model) -> list[dict]:
    """Prediction records for a corpus, one per utterance, in corpus order."""
    records = []
    for conv in convs:
        preds = model.predict_conversation(conv) if isinstance(model, Ensemble) else predict_conversation(conv, model)
        records.extend(p.to_record(conv.id, i) for i, p in enumerate(preds))
    return records


