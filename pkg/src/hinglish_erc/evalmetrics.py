"""Accuracy, support-weighted precision / recall / F1 and the confusion matrix.

Counts are combined in exact rational arithmetic and rounded once at the
end, so identities such as weighted recall == accuracy hold bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .corpus import EmotionLabelSet
from .errors import DataError

TABLE_COLUMNS = ("Weighted F1", "Accuracy", "Weighted Precision", "Weighted Recall")


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class: dict[str, ClassScores]
    confusion: list[list[int]]
    labels: tuple[str, ...]
    n_scored: int
    n_unscored: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = list(self.labels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def confusion_matrix(preds: Sequence[str], golds: Sequence[str], labels: EmotionLabelSet) -> np.ndarray:
    k = len(labels)
    cm = np.zeros((k, k), dtype=np.int64)
    for p, g in zip(preds, golds):
        for lab in (p, g):
            if lab not in labels:
                raise DataError(f"label {lab!r} is not in the label set")
        cm[labels.index(g), labels.index(p)] += 1
    return cm


def evaluate(preds: Sequence[str | None], golds: Sequence[str | None], labels: EmotionLabelSet) -> EvalReport:
    """Score predictions against gold labels; pairs with no gold are skipped
    and counted in ``n_unscored``."""
    if len(preds) != len(golds):
        raise DataError(f"{len(preds)} predictions for {len(golds)} gold labels")
    pairs = [(p, g) for p, g in zip(preds, golds) if g is not None]
    if not pairs:
        raise DataError("nothing to score: no gold labels")
    if any(p is None for p, _ in pairs):
        raise DataError("missing prediction for a gold-labelled utterance")
    cm = confusion_matrix([p for p, _ in pairs], [g for _, g in pairs], labels)
    n = int(cm.sum())
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    per_class = {}
    wp = wr = wf = Fraction(0)
    for c, lab in enumerate(labels.labels):
        p = _ratio(int(tp[c]), int(predicted[c]))
        r = _ratio(int(tp[c]), int(support[c]))
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        s = int(support[c])
        wp, wr, wf = wp + s * p, wr + s * r, wf + s * f
        per_class[lab] = ClassScores(float(p), float(r), float(f), s)
    return EvalReport(
        accuracy=float(Fraction(int(tp.sum()), n)),
        weighted_precision=float(wp / n),
        weighted_recall=float(wr / n),
        weighted_f1=float(wf / n),
        per_class=per_class,
        confusion=cm.tolist(),
        labels=labels.labels,
        n_scored=n,
        n_unscored=len(golds) - n,
    )


def render_table(reports: Sequence[tuple[str, EvalReport]]) -> str:
    """Fixed-width text table, one row per named report, four decimals."""
    if not reports:
        raise ValueError("no reports to render")
    name_w = max(len("Model Name"), *(len(name) for name, _ in reports))
    widths = [max(len(c), 6) for c in TABLE_COLUMNS]
    header = "Model Name".ljust(name_w) + " | " + " | ".join(c.rjust(w) for c, w in zip(TABLE_COLUMNS, widths))
    lines = [header, "-" * len(header)]
    for name, r in reports:
        values = (r.weighted_f1, r.accuracy, r.weighted_precision, r.weighted_recall)
        lines.append(name.ljust(name_w) + " | " + " | ".join(f"{v:.4f}".rjust(w) for v, w in zip(values, widths)))
    return "\n".join(lines) + "\n"
