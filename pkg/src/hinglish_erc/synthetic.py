"""Synthetic conversations where half the emotions need context.

Utterances alternate statement / reply / statement / reply / statement.
A statement's emotion is set by a keyword it contains (joy or anger words).
A reply always reads "accha theek hai" and its emotion is set by the
keyword of the statement before it: a joy statement gets a ``surprise``
reply, an anger statement a ``sadness`` reply. Each conversation puts one
joy and one anger statement in front of its two replies, so a model that
ignores context can score at most 50% on replies.
"""

from __future__ import annotations

import numpy as np

from .corpus import Conversation, EmotionLabelSet, Utterance

LABELS = EmotionLabelSet(("joy", "anger", "surprise", "sadness"))
KEYWORDS = {"joy": ("khush", "mast", "badhiya"), "anger": ("gussa", "pagal", "bakwaas")}
REPLY_TO = {"joy": "surprise", "anger": "sadness"}
REPLY_TEXT = "accha theek hai"
FILLERS = ("yaar", "aaj", "bhai", "phir", "toh", "kal", "sach", "abhi")


def _statement(rng: np.random.Generator, emotion: str) -> str:
    words = list(rng.choice(FILLERS, size=int(rng.integers(1, 4)), replace=True))
    words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(KEYWORDS[emotion])))
    return " ".join(words)


def generate(n_conversations: int = 16, seed: int = 0, prefix: str = "syn") -> list[Conversation]:
    rng = np.random.default_rng(seed)
    convs = []
    for c in range(n_conversations):
        cid = f"{prefix}{seed}-{c:03d}"
        first, second = ("joy", "anger") if rng.random() < 0.5 else ("anger", "joy")
        last = "joy" if rng.random() < 0.5 else "anger"
        plan = [
            (_statement(rng, first), first),
            (REPLY_TEXT, REPLY_TO[first]),
            (_statement(rng, second), second),
            (REPLY_TEXT, REPLY_TO[second]),
            (_statement(rng, last), last),
        ]
        utts = [
            Utterance(cid, i, text, speaker="AB"[i % 2], text_en=text, gold=gold) for i, (text, gold) in enumerate(plan)
        ]
        convs.append(Conversation(cid, utts))
    return convs
