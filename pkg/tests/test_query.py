import random

import pytest
from hypothesis import given, strategies as st

from helpers import build_corpus_index, scan_query_oracle, write_random_corpus
from trikey.lexicon import BuildConfig, IdentityLemmatizer
from trikey.query import (
    QueryError,
    SearchHit,
    evaluate,
    find_occurrences,
    proximity_score,
    rank_occurrences,
    resolve_query_ranks,
    roundtrip_check,
)


class TestProximityScore:
    def test_seven_word_phrase(self):
        # spread 6 over 7 words: a phrase, full score
        assert proximity_score((0, 1, 2, 3, 4, 5, 6)) == 1.0

    def test_seven_words_spread_ten(self):
        positions = (0, 1, 2, 3, 4, 5, 10)
        assert proximity_score(positions) == pytest.approx(0.04)

    def test_two_words(self):
        assert proximity_score((3, 5)) == pytest.approx(0.25)

    def test_duplicate_positions_rejected(self):
        with pytest.raises(QueryError):
            proximity_score((3, 3, 5))

    def test_single_position_rejected(self):
        with pytest.raises(QueryError):
            proximity_score((3,))

    @given(st.sets(st.integers(0, 10_000), min_size=2, max_size=9))
    def test_translation_and_permutation_invariance(self, positions):
        xs = sorted(positions)
        score = proximity_score(xs)
        assert 0.0 < score <= 1.0
        shifted = [x + 100 for x in xs]
        assert proximity_score(shifted) == score
        rng = random.Random(0)
        shuffled = list(xs)
        rng.shuffle(shuffled)
        assert proximity_score(shuffled) == score


class TestEvaluate:
    def build(self, tmp_path, texts, md=5, ws=None):
        paths = []
        for i, text in enumerate(texts):
            p = tmp_path / ("doc%d.txt" % i)
            p.write_text(text, encoding="utf-8")
            paths.append(p)
        vocab = sorted({w for t in texts for w in t.split()})
        cfg = BuildConfig(ws_count=ws or max(1, len(vocab)), max_distance=md)
        store, freq, registry, _ = build_corpus_index(paths, tmp_path / "idx", cfg)
        return store, freq, registry, cfg, paths

    def test_phrase_document(self, tmp_path):
        store, freq, registry, cfg, _ = self.build(tmp_path, ["a b c"])
        hits = evaluate(["a", "b", "c"], store, freq, cfg, IdentityLemmatizer())
        assert hits == [SearchHit(0, (0, 1, 2), 1.0)]

    def test_permuted_query_words(self, tmp_path):
        store, freq, registry, cfg, _ = self.build(tmp_path, ["a b c"])
        hits = evaluate(["c", "a", "b"], store, freq, cfg, IdentityLemmatizer())
        assert hits == [SearchHit(0, (2, 0, 1), 1.0)]

    def test_words_not_near_each_other(self, tmp_path):
        text = "a " + " ".join("x%d" % i for i in range(20)) + " b c"
        store, freq, registry, cfg, _ = self.build(tmp_path, [text], ws=30)
        hits = evaluate(["a", "b", "c"], store, freq, cfg, IdentityLemmatizer())
        assert hits == []

    def test_non_stop_word_rejected(self, tmp_path):
        # ws_count 2 leaves "c" (rank 2, tie-broken by text) outside the stop class
        store, freq, registry, cfg, _ = self.build(tmp_path, ["a a b b c"], ws=2)
        with pytest.raises(QueryError):
            evaluate(["a", "b", "c"], store, freq, cfg, IdentityLemmatizer())

    def test_too_short_query_rejected(self, tmp_path):
        store, freq, registry, cfg, _ = self.build(tmp_path, ["a b c"])
        with pytest.raises(QueryError):
            evaluate(["a", "b"], store, freq, cfg, IdentityLemmatizer())

    def test_best_occurrence_wins_per_document(self, tmp_path):
        store, freq, registry, cfg, _ = self.build(
            tmp_path, ["a x b c junk junk junk a b c"], ws=20
        )
        hits = evaluate(["a", "b", "c"], store, freq, cfg, IdentityLemmatizer())
        assert len(hits) == 1
        assert hits[0].score == 1.0
        assert hits[0].positions == (7, 8, 9)

    def test_ranking_deterministic(self, tmp_path):
        texts = ["a b c", "a x b x c", "x a b c x"]
        store, freq, registry, cfg, _ = self.build(tmp_path, texts, ws=10)
        hits = evaluate(["a", "b", "c"], store, freq, cfg, IdentityLemmatizer())
        assert [h.doc for h in hits] == [0, 2, 1]
        assert hits[0].score == hits[1].score == 1.0

    def test_duplicate_query_words(self, tmp_path):
        store, freq, registry, cfg, _ = self.build(tmp_path, ["a b a"])
        hits = evaluate(["a", "b", "a"], store, freq, cfg, IdentityLemmatizer())
        assert len(hits) == 1
        assert sorted(hits[0].positions) == [0, 1, 2]
        assert len(set(hits[0].positions)) == 3

    def test_four_word_chain(self, tmp_path):
        store, freq, registry, cfg, _ = self.build(tmp_path, ["a b c d"], ws=4)
        hits = evaluate(["a", "b", "c", "d"], store, freq, cfg, IdentityLemmatizer())
        assert hits == [SearchHit(0, (0, 1, 2, 3), 1.0)]

    def test_hit_positions_point_at_the_query_words(self, tmp_path):
        # re-scanning the source text at the hit positions yields the words asked for
        rng = random.Random(77)
        cfg = BuildConfig(ws_count=15, max_distance=5)
        paths = write_random_corpus(tmp_path / "corpus", rng, docs=4, words_per_doc=120,
                                    vocab_size=15)
        store, freq, registry, _ = build_corpus_index(paths, tmp_path / "idx", cfg)
        from trikey.lexicon import tokenize

        words = ["w0", "w1", "w2"]
        hits = evaluate(words, store, freq, cfg, IdentityLemmatizer())
        assert hits
        for hit in hits:
            tokens = dict(
                (pos, word)
                for word, pos in tokenize(paths[hit.doc].read_text(encoding="utf-8"))
            )
            assert [tokens[x] for x in hit.positions] == words

    def test_matches_text_scan_oracle(self, tmp_path):
        rng = random.Random(21)
        cfg = BuildConfig(ws_count=12, max_distance=5)
        paths = write_random_corpus(tmp_path / "corpus", rng, docs=6, words_per_doc=80,
                                    vocab_size=12)
        store, freq, registry, _ = build_corpus_index(paths, tmp_path / "idx", cfg)
        for _ in range(30):
            ranks = tuple(rng.randrange(12) for _ in range(3))
            got = {
                (doc, frozenset(xs))
                for doc, xs in find_occurrences(ranks, store, cfg)
            }
            assert got == scan_query_oracle(paths, freq, ranks, cfg.max_distance), ranks


class TestRankOccurrences:
    def test_keeps_best_per_document(self):
        occurrences = [(0, (0, 5, 9)), (0, (0, 1, 2)), (1, (3, 4, 5))]
        hits = rank_occurrences(occurrences)
        assert hits == [
            SearchHit(0, (0, 1, 2), 1.0),
            SearchHit(1, (3, 4, 5), 1.0),
        ]

    def test_orders_by_score_then_doc(self):
        occurrences = [(5, (0, 1, 4)), (2, (0, 1, 2)), (9, (7, 8, 9))]
        hits = rank_occurrences(occurrences)
        assert [h.doc for h in hits] == [2, 9, 5]


class TestResolveRanks:
    def test_most_frequent_stop_lemma_wins(self, tmp_path):
        from trikey.lexicon import DictionaryLemmatizer, FrequencyList

        freq = FrequencyList([("be", 10), ("bee", 5)])
        cfg = BuildConfig(ws_count=2, max_distance=5)
        lem = DictionaryLemmatizer({"bees": ("bee", "be")})
        assert resolve_query_ranks(["bees"], freq, cfg, lem) == [0]


class TestRoundtrip:
    def test_indexed_documents_have_zero_misses(self, tmp_path):
        rng = random.Random(31)
        cfg = BuildConfig(ws_count=10, max_distance=5)
        paths = write_random_corpus(tmp_path / "corpus", rng, docs=5, words_per_doc=120,
                                    vocab_size=10)
        store, freq, registry, _ = build_corpus_index(paths, tmp_path / "idx", cfg)
        total = 0
        for doc_id in range(len(registry)):
            report = roundtrip_check(doc_id, store, registry, freq, cfg, IdentityLemmatizer())
            assert report.ok, report.misses
            total += report.windows
        assert total > 0

    def test_document_with_too_few_occurrences(self, tmp_path):
        p = tmp_path / "doc.txt"
        p.write_text("a b", encoding="utf-8")
        cfg = BuildConfig(ws_count=2, max_distance=5)
        store, freq, registry, _ = build_corpus_index([p], tmp_path / "idx", cfg)
        report = roundtrip_check(0, store, registry, freq, cfg, IdentityLemmatizer())
        assert report.windows == 0 and report.ok
