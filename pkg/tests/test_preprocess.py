import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hinglish_erc import preprocess as pp
from hinglish_erc.corpus import Conversation, Utterance, write_corpus
from hinglish_erc.errors import PipelineError


class Counting:
    """Uppercasing provider that counts calls."""

    def __init__(self, name="count", fail_on=()):
        self.name, self.calls, self.fail_on = name, 0, set(fail_on)

    def config(self):
        return {}

    def _run(self, text):
        self.calls += 1
        if text in self.fail_on:
            raise RuntimeError("provider down")
        return text.upper()

    transliterate = translate = _run


class TenParaphrases:
    name = "ten"

    def __init__(self, n=10):
        self.n = n

    def config(self):
        return {"n": self.n}

    def paraphrases(self, text, k):
        return [f"{text} #{i}" for i in range(min(k, self.n))]


def utt(text="kya baat hai", i=0, cid="c", **kw):
    return Utterance(cid, i, text, gold="joy", **kw)


class TestTranslate:
    def test_identity(self):
        out = pp.translate_pipeline(utt(), pp.IdentityTransliterator(), pp.IdentityTranslator(), pp.ProviderCache())
        assert out.text_en == "kya baat hai" and out.text_raw == "kya baat hai"

    def test_dictionary_composition(self):
        tl = pp.DictionaryTransliterator({"haan": "हाँ"})
        tr = pp.DictionaryTranslator({"हाँ": "yes"})
        assert pp.translate_pipeline(utt("haan"), tl, tr, pp.ProviderCache()).text_en == "yes"

    def test_lexicon_file(self, tmp_path):
        (tmp_path / "lex.tsv").write_text("haan\tहाँ\nnahi\tनहीं\n", encoding="utf-8")
        tl = pp.make_transliterator(f"dict:{tmp_path / 'lex.tsv'}")
        assert tl.transliterate("haan nahi") == "हाँ नहीं"

    def test_one_call_per_stage(self):
        tl, tr, cache = Counting("a"), Counting("b"), pp.ProviderCache()
        u = utt()
        pp.translate_pipeline(u, tl, tr, cache)
        pp.translate_pipeline(u, tl, tr, cache)
        assert (tl.calls, tr.calls) == (1, 1)

    def test_disk_cache_survives(self, tmp_path):
        tl, tr = Counting("a"), Counting("b")
        pp.translate_pipeline(utt(), tl, tr, pp.ProviderCache(tmp_path))
        pp.translate_pipeline(utt(), tl, tr, pp.ProviderCache(tmp_path))
        assert (tl.calls, tr.calls) == (1, 1)

    def test_idempotent_unless_forced(self):
        tl, tr = Counting("a"), Counting("b")
        u = utt(text_en="already")
        assert pp.translate_pipeline(u, tl, tr, pp.ProviderCache()) is u
        assert pp.translate_pipeline(u, tl, tr, pp.ProviderCache(), force=True).text_en == "KYA BAAT HAI"

    def test_failure_names_stage(self):
        with pytest.raises(PipelineError) as info:
            pp.translate_pipeline(utt(), pp.IdentityTransliterator(), Counting("b", {"kya baat hai"}), pp.ProviderCache())
        assert info.value.stage.startswith("translate")

    def test_corpus_falls_back(self, caplog):
        conv = Conversation("c", [utt("ok", 0), utt("bad", 1)])
        with caplog.at_level(logging.WARNING):
            out = pp.translate_corpus([conv], pp.IdentityTransliterator(), Counting("b", {"bad"}))
        assert [u.text_en for u in out[0].utterances] == ["OK", "bad"]
        assert "untranslated" in caplog.text

    def test_parallel_matches_serial(self):
        tr = Counting("b")
        tr.max_parallelism = 4
        tl = pp.IdentityTransliterator()
        tl.max_parallelism = 4
        convs = [Conversation("c", [utt(f"t{i}", i) for i in range(12)])]
        assert pp.translate_corpus(convs, tl, tr, jobs=4) == pp.translate_corpus(convs, tl, Counting("b"), jobs=1)


class TestAugment:
    def test_three_per_utterance(self):
        conv = Conversation("c", [utt(f"s{i}", i) for i in range(4)])
        out = pp.augment_corpus([conv], TenParaphrases(), 0)
        assert len(out[0].utterances) == 4 and len(out[0].synthetic) == 12
        assert all(s.synthetic and s.gold == "joy" for s in out[0].synthetic)
        assert out[0].utterances == conv.utterances

    def test_min_rule(self):
        out = pp.augment_corpus([Conversation("c", [utt()])], TenParaphrases(2), 0)
        assert len(out[0].synthetic) == 2

    def test_zero_skips(self):
        out = pp.augment_corpus([Conversation("c", [utt()])], TenParaphrases(0), 0)
        assert out[0].synthetic == []

    def test_failure_skips_with_warning(self, caplog):
        class Broken(TenParaphrases):
            def paraphrases(self, text, k):
                raise RuntimeError("offline")

        with caplog.at_level(logging.WARNING):
            out = pp.augment_corpus([Conversation("c", [utt()])], Broken(), 0)
        assert out[0].synthetic == [] and "failed" in caplog.text

    def test_deterministic_bytes(self, tmp_path):
        convs = [Conversation(f"c{j}", [utt(f"s{i}", i, f"c{j}") for i in range(5)]) for j in range(3)]
        for name in ("a", "b"):
            write_corpus(pp.augment_corpus(convs, TenParaphrases(), 7), tmp_path / name)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    @given(st.integers(0, 40), st.text(max_size=20))
    def test_sample_indices(self, n, key):
        idx = pp.sample_paraphrase_indices(n, key)
        assert len(idx) == min(3, n, 10)
        assert len(set(idx)) == len(idx)
        assert all(0 <= i < min(n, 10) for i in idx)


class TestRuleParaphraser:
    def test_no_input_no_duplicates(self):
        out = pp.RuleParaphraser().paraphrases("I am very happy today, and you are sad", 10)
        assert len(out) == 10
        assert "I am very happy today, and you are sad" not in out
        assert len(set(out)) == len(out)

    def test_synonym_file(self, tmp_path):
        (tmp_path / "syn.tsv").write_text("yaar\tdost|bhai\n", encoding="utf-8")
        p = pp.make_paraphraser(f"rules:{tmp_path / 'syn.tsv'}")
        assert p.paraphrases("aaj yaar", 10) == ["aaj dost", "aaj bhai"]

    def test_unknown_spec(self):
        with pytest.raises(ValueError):
            pp.make_paraphraser("pegasus")
