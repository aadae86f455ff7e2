"""Gold filtering, accuracy, and the character tf-idf baseline."""
from __future__ import annotations

import io

import numpy as np
import pytest

from ctxnorm.dictionary import build_dictionary
from ctxnorm.errors import CorpusError, CtxnormError
from ctxnorm.evaluation import (
    GoldMention,
    confusion_counts,
    evaluate_accuracy,
    filter_gold,
    read_gold,
    tfidf_fit,
    tfidf_predict,
    write_gold,
)
from oracles import oracle_tfidf_vectors


def gold(concept, text="some text", start=0, end=4, doc="d", sent=0):
    return GoldMention(doc, sent, text, start, end, concept)


class TestFilterGold:
    def test_absent_concept_dropped(self):
        d = build_dictionary([("D1", "flu")])
        kept = filter_gold([gold("D1"), gold("D9")], d)
        assert [g.gold_concept for g in kept] == ["D1"]

    def test_all_present_identity(self):
        d = build_dictionary([("D1", "flu"), ("D2", "cough")])
        mentions = [gold("D1"), gold("D2"), gold("D1")]
        assert filter_gold(mentions, d) == mentions

    def test_mixed_counts(self):
        d = build_dictionary([(f"D{i}", f"syn{i}") for i in range(7)])
        mentions = [gold(f"D{i}") for i in range(7)] + [gold(f"X{i}") for i in range(3)]
        assert len(filter_gold(mentions, d)) == 7

    def test_retained_records_unchanged(self):
        d = build_dictionary([("D1", "flu")])
        mention = gold("D1", text="flu case", start=0, end=3)
        assert filter_gold([mention], d)[0] is mention


class TestAccuracy:
    def test_all_correct(self):
        mentions = [gold("A"), gold("B")]
        assert evaluate_accuracy(["A", "B"], mentions) == 1.0

    def test_none_correct(self):
        mentions = [gold("A"), gold("B")]
        assert evaluate_accuracy(["B", "A"], mentions) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(CtxnormError):
            evaluate_accuracy(["A"], [gold("A"), gold("B")])

    def test_joint_permutation_invariance(self):
        rng = np.random.default_rng(0)
        mentions = [gold(f"C{i % 3}") for i in range(12)]
        predictions = [f"C{int(rng.integers(3))}" for _ in range(12)]
        base = evaluate_accuracy(predictions, mentions)
        perm = rng.permutation(12)
        assert evaluate_accuracy(
            [predictions[i] for i in perm], [mentions[i] for i in perm]
        ) == pytest.approx(base)

    def test_confusion_counts(self):
        mentions = [gold("A"), gold("A"), gold("B")]
        counts = confusion_counts(["A", "B", "B"], mentions)
        assert counts == {("A", "A"): 1, ("A", "B"): 1, ("B", "B"): 1}


class TestTfidf:
    def test_single_synonym_vector_is_unit_norm(self):
        model = tfidf_fit(build_dictionary([("D1", "flu")]))
        assert np.linalg.norm(model.synonym_matrix[0]) == pytest.approx(1.0, abs=1e-10)

    def test_ubiquitous_ngram_gets_minimal_idf(self):
        model = tfidf_fit(build_dictionary([("D1", "ax"), ("D2", "bx"), ("D3", "cx")]))
        everywhere = model.idf[model.vocabulary["x"]]
        rare = model.idf[model.vocabulary["a"]]
        assert everywhere < rare
        assert everywhere == pytest.approx(np.log(4 / 4) + 1.0, abs=1e-12)

    def test_matches_first_principles_oracle(self):
        d = build_dictionary([("D1", "lung cancer"), ("D2", "flu"), ("D3", "fever")])
        model = tfidf_fit(d)
        vocab, expected = oracle_tfidf_vectors(model.synonyms)
        assert set(vocab) == set(model.vocabulary)
        for row in range(len(model.synonyms)):
            for gram, col in vocab.items():
                got = model.synonym_matrix[row, model.vocabulary[gram]]
                assert got == pytest.approx(expected[row, col], abs=1e-10)

    def test_stored_synonym_maps_to_own_concept(self):
        d = build_dictionary(
            [("D1", "lung cancer"), ("D2", "influenza"), ("D3", "renal failure")]
        )
        model = tfidf_fit(d)
        for synonym, concept in d.synonym_to_concept().items():
            assert tfidf_predict(model, synonym) == concept

    def test_exact_surface_has_cosine_one(self):
        d = build_dictionary([("D1", "flu"), ("D2", "zz")])
        model = tfidf_fit(d)
        query = model.vectorize("flu")
        sims = model.synonym_matrix @ query
        row = model.synonyms.index("flu")
        assert sims[row] == pytest.approx(1.0, abs=1e-10)

    def test_no_shared_ngram_deterministic_tie(self):
        d = build_dictionary([("D2", "bb"), ("D1", "aa")])
        model = tfidf_fit(d)
        # "zz" shares nothing; similarity 0 everywhere -> lexicographically
        # first synonym ("aa") wins
        assert tfidf_predict(model, "zz") == "D1"

    def test_query_normalized_like_dictionary(self):
        d = build_dictionary([("D1", "lung cancer"), ("D2", "zq")])
        model = tfidf_fit(d)
        assert tfidf_predict(model, "LUNG   Cancer") == "D1"

    def test_empty_surface_rejected(self):
        model = tfidf_fit(build_dictionary([("D1", "flu")]))
        with pytest.raises(CtxnormError):
            tfidf_predict(model, "  ")

    def test_empty_dictionary_rejected(self):
        with pytest.raises(CtxnormError):
            tfidf_fit(build_dictionary([]))


class TestGoldFile:
    def test_round_trip_groups_by_sentence(self):
        mentions = [
            GoldMention("d", 0, "flu and flu", 0, 3, "D1"),
            GoldMention("d", 0, "flu and flu", 8, 11, "D1"),
            GoldMention("e", 2, "cough", 0, 5, "D2"),
        ]
        buffer = io.StringIO()
        written = write_gold(buffer, mentions)
        assert written == 3
        assert len(buffer.getvalue().splitlines()) == 2  # two sentences
        buffer.seek(0)
        assert list(read_gold(buffer)) == mentions

    def test_bad_record_carries_position(self):
        buffer = io.StringIO('{"doc_id": "d"}\n')
        with pytest.raises(CorpusError) as err:
            list(read_gold(buffer, "gold.jsonl"))
        assert "gold.jsonl:1" in str(err.value)

    def test_invalid_span_rejected(self):
        with pytest.raises(ValueError):
            GoldMention("d", 0, "abc", 2, 9, "D1")
