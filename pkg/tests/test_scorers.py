import csv
import math
import random

import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from corpusdata import FIXTURES
from oracles import recount_stats

from nrp_eval.corpus import Query, load_documents
from nrp_eval.scorers import (
    DphScorer,
    EchoScorer,
    TfidfScorer,
    build_stats,
    echo_score,
    is_answer_id,
    make_scorer,
    rank_pool,
    score_dph,
    score_tfidf,
    tokenize,
)

VOCAB = ["flu", "shot", "dose", "fever", "sleep", "water", "rest", "viral",
         "cough", "pain", "diet", "bone", "skin", "heart", "zinc"]


def random_corpus(rng, n_docs=None):
    n_docs = n_docs or rng.randrange(1, 12)
    docs = []
    for _ in range(n_docs):
        kind = rng.random()
        if kind < 0.1:
            docs.append("")
        elif kind < 0.2:
            docs.append(" ".join([rng.choice(VOCAB)] * rng.randrange(1, 5)))
        else:
            docs.append(" ".join(rng.choices(VOCAB, k=rng.randrange(1, 30))))
    return docs


class TestTokenize:
    def test_splits_on_non_alphanumeric(self):
        assert tokenize("Can Vitamin-D prevent flu?") == ["can", "vitamin", "d", "prevent", "flu"]

    def test_empty(self):
        assert tokenize("") == []

    def test_lowercases(self):
        assert tokenize("A a A") == ["a", "a", "a"]

    def test_underscore_is_a_separator(self):
        assert tokenize("a_b") == ["a", "b"]

    def test_round_trip(self):
        rng = random.Random(3)
        for _ in range(100):
            text = "".join(rng.choices("ab1 .,-_?!\tZ", k=rng.randrange(0, 40)))
            once = tokenize(text)
            assert tokenize(" ".join(once)) == once


class TestBuildStats:
    def test_two_doc_example(self):
        stats = build_stats(["flu shot", "flu vaccine dose"])
        assert stats.doc_count == 2
        assert stats.total_tokens == 5
        assert stats.avg_doc_len == 2.5
        assert stats.doc_freq == {"flu": 2, "shot": 1, "vaccine": 1, "dose": 1}
        assert stats.coll_term_freq == {"flu": 2, "shot": 1, "vaccine": 1, "dose": 1}

    def test_empty_collection_rejected(self):
        with pytest.raises(ValueError):
            build_stats([])

    def test_single_empty_doc(self):
        stats = build_stats([""])
        assert stats.doc_count == 1
        assert stats.avg_doc_len == 0.0

    def test_matches_naive_recount_on_random_corpora(self):
        rng = random.Random(42)
        for _ in range(100):
            texts = random_corpus(rng)
            stats = build_stats(texts)
            expected = recount_stats(texts, tokenize)
            assert stats.doc_count == expected["doc_count"]
            assert stats.total_tokens == expected["total_tokens"]
            assert stats.avg_doc_len == pytest.approx(expected["avg_doc_len"])
            assert stats.doc_freq == expected["doc_freq"]
            assert stats.coll_term_freq == expected["coll_term_freq"]
            assert all(df <= stats.doc_count for df in stats.doc_freq.values())


class TestTfidf:
    def test_hand_computed_example(self):
        stats = build_stats(["flu shot", "flu vaccine dose"])
        score = score_tfidf(["flu", "shot"], ["flu", "shot"], stats)
        assert score == pytest.approx(math.log(2) + math.log(3), abs=1e-12)

    def test_absent_term_contributes_zero(self):
        stats = build_stats(["flu shot"])
        assert score_tfidf(["martian"], ["martian", "martian"], stats) == 0.0

    def test_empty_query_scores_zero(self):
        stats = build_stats(["flu shot"])
        assert score_tfidf([], ["flu"], stats) == 0.0

    def test_repeated_query_terms_count_once(self):
        stats = build_stats(["flu shot", "flu vaccine dose"])
        once = score_tfidf(["flu"], ["flu", "shot"], stats)
        twice = score_tfidf(["flu", "flu"], ["flu", "shot"], stats)
        assert once == twice

    def test_appending_non_query_tokens_leaves_score_unchanged(self):
        rng = random.Random(5)
        for _ in range(50):
            texts = random_corpus(rng, n_docs=6)
            stats = build_stats(texts)
            query = rng.choices(VOCAB, k=3)
            doc = rng.choices(VOCAB, k=10)
            padding = [t for t in rng.choices(VOCAB, k=8) if t not in query]
            assert score_tfidf(query, doc, stats) == score_tfidf(query, doc + padding, stats)


class TestDph:
    def test_matches_frozen_oracle(self):
        docs = load_documents(FIXTURES / "dph_corpus.jsonl")
        stats = build_stats(docs)
        by_id = {d.id: d.text for d in docs}
        with open(FIXTURES / "dph_oracle.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 24
        for row in rows:
            got = score_dph(tokenize(row["query"]), tokenize(by_id[row["doc_id"]]), stats)
            assert got == pytest.approx(float(row["dph"]), abs=1e-12), row

    def test_zero_tf_contributes_zero(self):
        stats = build_stats(["flu shot", "rest water"])
        assert score_dph(["flu"], ["rest", "water"], stats) == 0.0

    def test_term_absent_from_collection_skipped(self):
        stats = build_stats(["flu shot"])
        # term occurs in the scored text but nowhere in the collection
        assert score_dph(["martian"], ["martian", "flu"], stats) == 0.0

    def test_empty_doc_scores_zero(self):
        stats = build_stats(["flu shot"])
        assert score_dph(["flu"], [], stats) == 0.0

    def test_term_filling_document_stays_finite(self):
        stats = build_stats(["flu flu flu", "shot"])
        score = score_dph(["flu"], ["flu", "flu", "flu"], stats)
        assert math.isfinite(score)

    def test_finite_on_randomized_adversarial_inputs(self):
        rng = random.Random(99)
        for _ in range(300):
            texts = random_corpus(rng)
            stats = build_stats(texts)
            query = rng.choices(VOCAB + ["oovword"], k=rng.randrange(1, 5))
            doc = rng.choice(
                [
                    [],
                    [rng.choice(VOCAB)],
                    [rng.choice(VOCAB)] * rng.randrange(1, 6),
                    rng.choices(VOCAB + ["oovword"], k=rng.randrange(1, 25)),
                ]
            )
            score = score_dph(query, doc, stats)
            assert math.isfinite(score)


class TestEchoScore:
    def test_overlap_example(self):
        assert echo_score("flu shot", "flu shot info") == 0.5

    def test_disjoint_is_zero(self):
        assert echo_score("flu shot", "rest water") == 0.0

    def test_repeated_tokens_counted_once(self):
        assert echo_score("flu flu", "flu flu flu") == 1.0 / 4.0


class TestEstimatorSurface:
    def test_unfitted_lexical_scorer_raises(self):
        with pytest.raises(NotFittedError):
            TfidfScorer().score_one("flu", "flu shot")

    def test_fit_returns_self_and_scores(self):
        scorer = DphScorer().fit(["flu shot", "rest water"])
        assert isinstance(scorer, DphScorer)
        assert math.isfinite(scorer.score_one("flu", "flu shot"))

    def test_clone_and_get_params(self):
        scorer = TfidfScorer()
        assert scorer.get_params() == {}
        assert isinstance(clone(scorer), TfidfScorer)

    def test_predict_shapes_scores(self):
        scorer = EchoScorer()
        scores = scorer.predict([("flu shot", "flu shot info"), ("flu", "rest")])
        assert list(scores) == [0.5, 0.0]

    def test_make_scorer_native_kinds(self):
        assert isinstance(make_scorer("tfidf"), TfidfScorer)
        assert isinstance(make_scorer("dph"), DphScorer)
        assert isinstance(make_scorer("echo"), EchoScorer)
        assert make_scorer("cmd:true").kind == "external"

    def test_make_scorer_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown scorer spec"):
            make_scorer("bm25")


class TestRankPool:
    def setup_method(self):
        self.query = Query("q1", "flu shot")
        self.scorer = TfidfScorer().fit(
            ["flu shot flu", "flu vaccine dose", "rest water sleep"]
        )

    def test_sorted_descending(self):
        ranking = rank_pool(
            self.scorer, self.query, [("a", "rest water"), ("b", "flu shot flu")]
        )
        assert ranking.ids() == ["b", "a"]
        scores = [s for _, s in ranking.entries]
        assert scores == sorted(scores, reverse=True)

    def test_tied_answer_ranks_below_document(self):
        items = [("d1", "rest water"), ("ANSWER::x", "sleep")]  # both score 0.0
        ranking = rank_pool(self.scorer, self.query, items)
        assert ranking.ids() == ["d1", "ANSWER::x"]

    def test_tied_documents_order_by_id(self):
        items = [("d2", "sleep"), ("d1", "rest")]
        assert rank_pool(self.scorer, self.query, items).ids() == ["d1", "d2"]

    def test_input_permutation_invariance(self):
        rng = random.Random(17)
        items = [(f"d{i}", " ".join(rng.choices(VOCAB, k=5))) for i in range(12)]
        items.append(("ANSWER::m::q1::0", "flu shot"))
        reference = rank_pool(self.scorer, self.query, items)
        for _ in range(10):
            shuffled = items[:]
            rng.shuffle(shuffled)
            assert rank_pool(self.scorer, self.query, shuffled) == reference

    def test_injection_does_not_reorder_documents(self):
        rng = random.Random(23)
        for scorer_cls in (TfidfScorer, DphScorer):
            texts = random_corpus(rng, n_docs=8)
            scorer = scorer_cls().fit(texts)
            items = [(f"d{i}", t) for i, t in enumerate(texts)]
            query = Query("q", " ".join(rng.choices(VOCAB, k=3)))
            base = rank_pool(scorer, query, items).ids()
            injected = rank_pool(
                scorer, query, items + [("ANSWER::m::q::0", texts[0])]
            ).ids()
            assert [i for i in injected if not is_answer_id(i)] == base

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate item id"):
            rank_pool(self.scorer, self.query, [("d1", "a"), ("d1", "b")])

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError, match="empty pool"):
            rank_pool(self.scorer, self.query, [])

    def test_non_finite_scores_rejected(self):
        class InfScorer(EchoScorer):
            def score_one(self, query, text):
                return float("inf")

        with pytest.raises(ValueError, match="non-finite score"):
            rank_pool(InfScorer(), self.query, [("d1", "a")])

    def test_byte_identical_across_runs(self):
        items = [(f"d{i}", " ".join(VOCAB[i:i + 4])) for i in range(10)]
        first = rank_pool(self.scorer, self.query, items)
        second = rank_pool(self.scorer, self.query, items)
        assert repr(first) == repr(second)
