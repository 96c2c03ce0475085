"""Code-mixed preprocessing: romanised Hinglish -> Devanagari -> English, and
paraphrase augmentation.

The real transliteration, translation and paraphrase models live outside
this package; they plug in through the three provider protocols below.
Offline stand-ins (identity, TSV lexicon lookup, rule-based paraphrasing)
ship here so the pipeline runs without network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Protocol, Sequence

from .corpus import Conversation, Utterance
from .errors import DataError, PipelineError

log = logging.getLogger(__name__)

PARAPHRASE_POOL = 10
PARAPHRASES_PER_UTTERANCE = 3


class TransliterationProvider(Protocol):
    name: str
    max_parallelism: int

    def config(self) -> dict: ...

    def transliterate(self, text_roman: str) -> str: ...


class TranslationProvider(Protocol):
    name: str
    max_parallelism: int

    def config(self) -> dict: ...

    def translate(self, text_hi: str) -> str: ...


class ParaphraseProvider(Protocol):
    name: str

    def config(self) -> dict: ...

    def paraphrases(self, text: str, k: int) -> list[str]: ...


# ------------------------------------------------------------------ stubs


class IdentityTransliterator:
    name = "identity"
    max_parallelism = 8

    def config(self) -> dict:
        return {}

    def transliterate(self, text_roman: str) -> str:
        return text_roman


class IdentityTranslator:
    name = "identity"
    max_parallelism = 8

    def config(self) -> dict:
        return {}

    def translate(self, text_hi: str) -> str:
        return text_hi


def load_lexicon(path: str | Path) -> dict[str, str]:
    """TSV with ``source<TAB>target`` per line; blank lines and ``#`` comments skipped."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"lexicon not found: {path}")
    table = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise DataError(f"{path}:{lineno}: expected 'source<TAB>target'")
        table[parts[0]] = parts[1]
    return table


class _LexiconMapper:
    """Whole-string lookup first, then token by token; unknown tokens pass
    through unchanged. Lookups try the exact token, then its lowercase."""

    max_parallelism = 8

    def __init__(self, lexicon: dict[str, str], name: str):
        self.lexicon = dict(lexicon)
        self.name = name

    def config(self) -> dict:
        digest = hashlib.sha256(json.dumps(self.lexicon, sort_keys=True, ensure_ascii=False).encode()).hexdigest()
        return {"lexicon_sha256": digest}

    def _lookup(self, token: str) -> str:
        if token in self.lexicon:
            return self.lexicon[token]
        return self.lexicon.get(token.lower(), token)

    def map(self, text: str) -> str:
        if text in self.lexicon:
            return self.lexicon[text]
        return " ".join(self._lookup(tok) for tok in text.split())


class DictionaryTransliterator(_LexiconMapper):
    def __init__(self, lexicon: dict[str, str], name: str = "dict"):
        super().__init__(lexicon, name)

    def transliterate(self, text_roman: str) -> str:
        return self.map(text_roman)


class DictionaryTranslator(_LexiconMapper):
    def __init__(self, lexicon: dict[str, str], name: str = "dict"):
        super().__init__(lexicon, name)

    def translate(self, text_hi: str) -> str:
        return self.map(text_hi)


DEFAULT_SYNONYMS = {
    "good": ["nice", "great", "fine"],
    "bad": ["awful", "terrible"],
    "happy": ["glad", "cheerful"],
    "sad": ["unhappy", "down"],
    "angry": ["mad", "furious"],
    "very": ["really", "so"],
    "said": ["told", "mentioned"],
    "okay": ["ok", "alright"],
    "yes": ["yeah", "sure"],
    "no": ["nope", "nah"],
    "friend": ["buddy", "pal"],
    "today": ["this day"],
    "now": ["right now", "at once"],
    "think": ["believe", "feel"],
    "what": ["what exactly"],
}


def load_synonyms(path: str | Path) -> dict[str, list[str]]:
    """TSV ``word<TAB>syn1|syn2|...``."""
    table = {}
    for word, syns in load_lexicon(path).items():
        table[word] = [s for s in syns.split("|") if s]
    return table


class RuleParaphraser:
    """Deterministic paraphrases: clause reordering, then single-word synonym
    swaps, then pairs of swaps, in a fixed order."""

    name = "rules"

    def __init__(self, synonyms: dict[str, list[str]] | None = None):
        self.synonyms = {k.lower(): list(v) for k, v in (synonyms or DEFAULT_SYNONYMS).items()}

    def config(self) -> dict:
        return {"synonyms": self.synonyms}

    def _reorders(self, text: str) -> list[str]:
        out = []
        for sep in (", ", " and ", " but "):
            if sep in text:
                head, tail = text.split(sep, 1)
                out.append(f"{tail}{sep}{head}")
        return out

    def paraphrases(self, text: str, k: int) -> list[str]:
        tokens = text.split()
        slots = [(i, self.synonyms[t.lower()]) for i, t in enumerate(tokens) if t.lower() in self.synonyms]
        candidates = self._reorders(text)
        for i, syns in slots:
            for s in syns:
                candidates.append(" ".join(tokens[:i] + [s] + tokens[i + 1 :]))
        for a in range(len(slots)):
            for b in range(a + 1, len(slots)):
                (i, si), (j, sj) = slots[a], slots[b]
                for x in si:
                    for y in sj:
                        swapped = list(tokens)
                        swapped[i], swapped[j] = x, y
                        candidates.append(" ".join(swapped))
        seen, out = {text}, []
        for c in candidates:
            if c not in seen:
                seen.add(c)
                out.append(c)
            if len(out) == k:
                break
        return out


# ------------------------------------------------------------------ cache


class ProviderCache:
    """Content-addressed cache keyed by (provider name, config hash, input).

    Always memoises in memory; with ``directory`` set, entries are also
    written as small JSON files under ``directory/<2 hex>/<sha256>.json``.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self._memory: dict[str, str] = {}

    @staticmethod
    def key(provider, text: str) -> str:
        cfg = hashlib.sha256(json.dumps(provider.config(), sort_keys=True, ensure_ascii=False).encode()).hexdigest()
        return hashlib.sha256(json.dumps([provider.name, cfg, text], ensure_ascii=False).encode()).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> str | None:
        if key in self._memory:
            return self._memory[key]
        if self.directory is not None:
            path = self._path(key)
            if path.exists():
                value = json.loads(path.read_text(encoding="utf-8"))["output"]
                self._memory[key] = value
                return value
        return None

    def put(self, key: str, value: str) -> None:
        self._memory[key] = value
        if self.directory is not None:
            path = self._path(key)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps({"output": value}, ensure_ascii=False), encoding="utf-8")

    def cached_call(self, provider, method: str, text: str) -> str:
        key = self.key(provider, text)
        hit = self.get(key)
        if hit is not None:
            return hit
        value = getattr(provider, method)(text)
        if not isinstance(value, str):
            raise TypeError(f"{provider.name}.{method} returned {type(value).__name__}, expected str")
        self.put(key, value)
        return value


_DEFAULT_CACHE = ProviderCache()


def translate_pipeline(
    u: Utterance,
    tl: TransliterationProvider,
    tr: TranslationProvider,
    cache: ProviderCache | None = None,
    force: bool = False,
) -> Utterance:
    """Fill ``text_en`` with translate(transliterate(text_raw)).

    Utterances that already carry English text come back unchanged unless
    ``force``. Provider failures raise ``PipelineError`` naming the stage.
    """
    if u.text_en is not None and not force:
        return u
    if not u.text_raw:
        raise PipelineError("input", f"utterance ({u.conversation_id}, {u.index}) has empty text_raw")
    cache = cache if cache is not None else _DEFAULT_CACHE
    try:
        devanagari = cache.cached_call(tl, "transliterate", u.text_raw)
    except Exception as exc:
        raise PipelineError(f"transliterate[{tl.name}]", str(exc)) from exc
    try:
        english = cache.cached_call(tr, "translate", devanagari)
    except Exception as exc:
        raise PipelineError(f"translate[{tr.name}]", str(exc)) from exc
    return replace(u, text_en=english)


def translate_corpus(
    convs: Sequence[Conversation],
    tl: TransliterationProvider,
    tr: TranslationProvider,
    cache: ProviderCache | None = None,
    force: bool = False,
    jobs: int = 1,
) -> list[Conversation]:
    """Translate every original utterance. A failing utterance keeps its raw
    text as ``text_en`` and logs a warning; the run carries on."""
    cache = cache if cache is not None else ProviderCache()
    workers = max(1, min(jobs, getattr(tl, "max_parallelism", 1), getattr(tr, "max_parallelism", 1)))

    def one(u: Utterance) -> Utterance:
        try:
            return translate_pipeline(u, tl, tr, cache, force)
        except PipelineError as exc:
            log.warning("utterance (%s, %d) left untranslated: %s", u.conversation_id, u.index, exc)
            return replace(u, text_en=u.text_raw)

    out = []
    for conv in convs:
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                utts = list(pool.map(one, conv.utterances))
        else:
            utts = [one(u) for u in conv.utterances]
        out.append(Conversation(conv.id, utts, list(conv.synthetic)))
    return out


# ------------------------------------------------------------------ augmentation


def sample_paraphrase_indices(n: int, seed_key: str) -> list[int]:
    """Up to three distinct positions among the first ``min(n, 10)``."""
    pool = min(n, PARAPHRASE_POOL)
    rng = random.Random(seed_key)
    return sorted(rng.sample(range(pool), min(PARAPHRASES_PER_UTTERANCE, pool)))


def augment_corpus(convs: Sequence[Conversation], p: ParaphraseProvider, rng_seed: int) -> list[Conversation]:
    """Attach three paraphrased copies per utterance, flagged synthetic.

    Each copy keeps the original's gold label and position; only the text
    changes, so its context window is the original's. The sample for an
    utterance depends on (seed, conversation id, index) alone.
    """
    out = []
    for conv in convs:
        extra = []
        for u in conv.utterances:
            try:
                raw = p.paraphrases(u.text, PARAPHRASE_POOL)
            except Exception as exc:
                log.warning("paraphrasing (%s, %d) failed, skipped: %s", u.conversation_id, u.index, exc)
                continue
            cands = []
            for c in raw[:PARAPHRASE_POOL]:
                if c != u.text and c not in cands:
                    cands.append(c)
            for i in sample_paraphrase_indices(len(cands), f"{rng_seed}:{conv.id}:{u.index}"):
                extra.append(replace(u, text_en=cands[i], synthetic=True))
        out.append(Conversation(conv.id, list(conv.utterances), list(conv.synthetic) + extra))
    return out


# ------------------------------------------------------------------ registry


def make_transliterator(spec: str) -> TransliterationProvider:
    if spec == "identity":
        return IdentityTransliterator()
    if spec.startswith("dict:"):
        return DictionaryTransliterator(load_lexicon(spec[5:]))
    raise ValueError(f"unknown transliterator {spec!r} (use 'identity' or 'dict:<tsv>')")


def make_translator(spec: str) -> TranslationProvider:
    if spec == "identity":
        return IdentityTranslator()
    if spec.startswith("dict:"):
        return DictionaryTranslator(load_lexicon(spec[5:]))
    raise ValueError(f"unknown translator {spec!r} (use 'identity' or 'dict:<tsv>')")


def make_paraphraser(spec: str) -> ParaphraseProvider:
    if spec == "rules":
        return RuleParaphraser()
    if spec.startswith("rules:"):
        return RuleParaphraser(load_synonyms(spec[6:]))
    raise ValueError(f"unknown paraphraser {spec!r} (use 'rules' or 'rules:<tsv>')")
