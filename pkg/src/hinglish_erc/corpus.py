"""Conversation corpus: label vocabulary, JSONL loading and context windows."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorpusError

START = "«START»"

DEFAULT_LABELS = (
    "anger",
    "contempt",
    "disgust",
    "fear",
    "joy",
    "neutral",
    "sadness",
    "surprise",
)

RECORD_KEYS = {"cid", "index", "speaker", "text_raw", "text_en", "gold", "synthetic"}


@dataclass(frozen=True)
class EmotionLabelSet:
    """Closed, ordered label vocabulary. Class index is list position."""

    labels: tuple[str, ...] = DEFAULT_LABELS
    start_sentinel: str = START

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise CorpusError("label set is empty")
        if any(not isinstance(lab, str) or not lab for lab in labels):
            raise CorpusError("labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            raise CorpusError(f"duplicate labels in {list(labels)}")
        if self.start_sentinel in labels:
            raise CorpusError("the start sentinel cannot be a label")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise CorpusError(f"unknown label {label!r}") from None

    def emotion_index(self, label: str) -> int:
        """Row in an emotion-embedding table; the sentinel takes the last row."""
        if label == self.start_sentinel:
            return len(self.labels)
        return self.index(label)

    @classmethod
    def parse(cls, spec: str | Sequence[str] | None) -> "EmotionLabelSet":
        if spec is None:
            return cls()
        if isinstance(spec, str):
            spec = [s.strip() for s in spec.split(",") if s.strip()]
        return cls(tuple(spec))


@dataclass(frozen=True)
class Utterance:
    conversation_id: str
    index: int
    text_raw: str
    speaker: str | None = None
    text_en: str | None = None
    gold: str | None = None
    synthetic: bool = False

    @property
    def text(self) -> str:
        """Text the models consume: the English rendering when available."""
        return self.text_en if self.text_en is not None else self.text_raw

    def to_record(self) -> dict:
        rec = {
            "cid": self.conversation_id,
            "index": self.index,
            "speaker": self.speaker,
            "text_raw": self.text_raw,
            "text_en": self.text_en,
            "gold": self.gold,
        }
        if self.synthetic:
            rec["synthetic"] = True
        return rec


@dataclass
class Conversation:
    """Dialogue in order. ``synthetic`` holds paraphrased copies keyed by the
    index of the original utterance whose context they borrow."""

    id: str
    utterances: list[Utterance]
    synthetic: list[Utterance] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def texts(self) -> list[str]:
        return [u.text for u in self.utterances]


@dataclass(frozen=True)
class ContextWindow:
    previous: tuple[str, ...]
    current: str
    next: str | None
    previous_emotion: str
    index: int = 0
    gold: str | None = None
    synthetic: bool = False


def _parse_record(line: str, lineno: int, labels: EmotionLabelSet, strict: bool) -> Utterance:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    unknown = set(rec) - RECORD_KEYS
    if unknown and strict:
        raise CorpusError(f"line {lineno}: unknown keys {sorted(unknown)}")
    for key in ("cid", "index", "text_raw"):
        if key not in rec:
            raise CorpusError(f"line {lineno}: missing required key {key!r}")
    cid, index, text_raw = rec["cid"], rec["index"], rec["text_raw"]
    if not isinstance(cid, str):
        raise CorpusError(f"line {lineno}: cid must be a string")
    if not isinstance(index, int) or isinstance(index, bool) or index < 0:
        raise CorpusError(f"line {lineno}: index must be a non-negative integer")
    if not isinstance(text_raw, str):
        raise CorpusError(f"line {lineno}: text_raw must be a string")
    for key in ("speaker", "text_en", "gold"):
        if rec.get(key) is not None and not isinstance(rec[key], str):
            raise CorpusError(f"line {lineno}: {key} must be a string or null")
    gold = rec.get("gold")
    if gold is not None and gold not in labels:
        raise CorpusError(f"line {lineno}: unknown gold label {gold!r}")
    synthetic = rec.get("synthetic", False)
    if not isinstance(synthetic, bool):
        raise CorpusError(f"line {lineno}: synthetic must be a boolean")
    return Utterance(
        conversation_id=cid,
        index=index,
        text_raw=text_raw,
        speaker=rec.get("speaker"),
        text_en=rec.get("text_en"),
        gold=gold,
        synthetic=synthetic,
    )


def group_utterances(utterances: Iterable[Utterance]) -> list[Conversation]:
    """Group by conversation id (first-seen order) and validate ordering."""
    originals: dict[str, dict[int, Utterance]] = {}
    synthetic: dict[str, list[Utterance]] = {}
    for u in utterances:
        if u.synthetic:
            synthetic.setdefault(u.conversation_id, []).append(u)
            continue
        slots = originals.setdefault(u.conversation_id, {})
        if u.index in slots:
            raise CorpusError(f"duplicate utterance ({u.conversation_id!r}, {u.index})")
        slots[u.index] = u
    convs = []
    for cid, slots in originals.items():
        order = sorted(slots)
        if order != list(range(len(order))):
            raise CorpusError(f"conversation {cid!r}: indices {order} are not contiguous from 0")
        convs.append(Conversation(cid, [slots[i] for i in order]))
    by_id = {c.id: c for c in convs}
    for cid, extra in synthetic.items():
        conv = by_id.get(cid)
        if conv is None:
            raise CorpusError(f"synthetic records for unknown conversation {cid!r}")
        for u in extra:
            if u.index >= len(conv):
                raise CorpusError(f"synthetic record ({cid!r}, {u.index}) has no original")
        conv.synthetic = sorted(extra, key=lambda u: u.index)
    return convs


def load_corpus(
    path: str | Path,
    labels: EmotionLabelSet | None = None,
    strict: bool = True,
) -> list[Conversation]:
    labels = labels or EmotionLabelSet()
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    utterances = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            utterances.append(_parse_record(line, lineno, labels, strict))
    return group_utterances(utterances)


def iter_records(convs: Iterable[Conversation]) -> Iterable[dict]:
    for conv in convs:
        extra: dict[int, list[Utterance]] = {}
        for s in conv.synthetic:
            extra.setdefault(s.index, []).append(s)
        for u in conv.utterances:
            yield u.to_record()
            for s in extra.get(u.index, ()):
                yield s.to_record()


def write_corpus(convs: Iterable[Conversation], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in iter_records(convs):
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def make_windows(
    conv: Conversation,
    w_prev: int | None,
    use_next: bool,
    teacher_forcing: bool = True,
) -> list[ContextWindow]:
    """One window per utterance, in order.

    ``w_prev=None`` keeps the full history. Without teacher forcing (or with
    no gold on the previous utterance) the previous emotion is the start
    sentinel, to be replaced by the caller at inference time.
    """
    if w_prev is not None and w_prev < 0:
        raise ValueError("w_prev must be >= 0")
    texts = conv.texts
    windows = []
    for i, u in enumerate(conv.utterances):
        lo = 0 if w_prev is None else max(0, i - w_prev)
        previous = tuple(texts[lo:i])
        nxt = texts[i + 1] if use_next and i + 1 < len(texts) else None
        prev_emotion = START
        if i > 0 and teacher_forcing and conv.utterances[i - 1].gold is not None:
            prev_emotion = conv.utterances[i - 1].gold
        windows.append(ContextWindow(previous, texts[i], nxt, prev_emotion, index=i, gold=u.gold))
    return windows


def synthetic_windows(conv: Conversation, windows: Sequence[ContextWindow]) -> list[ContextWindow]:
    """Windows for paraphrased records: the original context with only the
    current sentence swapped."""
    out = []
    for s in conv.synthetic:
        base = windows[s.index]
        out.append(replace(base, current=s.text, synthetic=True))
    return out
