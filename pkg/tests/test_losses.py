"""Multi-similarity loss: mining rules, loss values, analytic gradients."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxnorm.errors import CtxnormError
from ctxnorm.losses import (
    MinedPairs,
    MSLossParams,
    SimilarityMatrix,
    mine_pairs,
    ms_loss,
    ms_loss_grad,
    similarity_matrix,
)
from oracles import oracle_ms_loss

PARAMS = MSLossParams(alpha=2.0, beta=50.0, base=1.0, margin=0.1)


def unit_rows(matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def random_batch(seed, n=6, dim=8, n_labels=3):
    rng = np.random.default_rng(seed)
    embeddings = unit_rows(rng.normal(size=(n, dim)))
    labels = [f"L{rng.integers(n_labels)}" for _ in range(n)]
    return embeddings, labels


class TestSimilarityMatrix:
    def test_identical_embeddings(self):
        y = np.array([[1.0, 0.0], [1.0, 0.0]])
        sim = similarity_matrix(y, ["a", "b"])
        assert np.allclose(sim.matrix, 1.0)

    def test_orthogonal_embeddings(self):
        y = np.array([[1.0, 0.0], [0.0, 1.0]])
        sim = similarity_matrix(y, ["a", "b"])
        assert sim.matrix[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_matches_double_loop_oracle(self):
        embeddings, labels = random_batch(0, n=5)
        sim = similarity_matrix(embeddings, labels)
        for i in range(5):
            for j in range(5):
                expected = float(sum(embeddings[i][c] * embeddings[j][c] for c in range(8)))
                assert sim.matrix[i, j] == pytest.approx(expected, abs=1e-12)

    def test_symmetric_unit_diagonal(self):
        embeddings, labels = random_batch(4)
        sim = similarity_matrix(embeddings, labels)
        assert np.allclose(sim.matrix, sim.matrix.T, atol=1e-12)
        assert np.allclose(np.diag(sim.matrix), 1.0, atol=1e-9)
        sim.validate()  # symmetric, unit diagonal, entries within [-1, 1]

    def test_validate_rejects_broken_matrices(self):
        good = np.array([[1.0, 0.2], [0.2, 1.0]])
        SimilarityMatrix(good, ("a", "b")).validate()
        with pytest.raises(CtxnormError):
            SimilarityMatrix(np.array([[1.0, 0.9], [0.2, 1.0]]), ("a", "b")).validate()
        with pytest.raises(CtxnormError):
            SimilarityMatrix(np.array([[0.5, 0.2], [0.2, 1.0]]), ("a", "b")).validate()
        with pytest.raises(CtxnormError):
            SimilarityMatrix(np.array([[1.0, 1.2], [1.2, 1.0]]), ("a", "b")).validate()

    def test_label_count_mismatch(self):
        with pytest.raises(CtxnormError):
            similarity_matrix(np.eye(3), ["a", "b"])


class TestMining:
    def test_threshold_rules(self):
        # anchor 0: positive sims {0.9, 0.4}, negative sims {0.5, 0.1}, margin 0.1
        s = np.array(
            [
                [1.0, 0.9, 0.4, 0.5, 0.1],
                [0.9, 1.0, 0.0, 0.0, 0.0],
                [0.4, 0.0, 1.0, 0.0, 0.0],
                [0.5, 0.0, 0.0, 1.0, 0.0],
                [0.1, 0.0, 0.0, 0.0, 1.0],
            ]
        )
        sim = SimilarityMatrix(s, ("a", "a", "a", "b", "b"))
        mined = mine_pairs(sim, PARAMS)
        assert mined.positives[0] == (2,)   # 0.9 is too easy, 0.4 kept
        assert mined.negatives[0] == (3,)   # 0.5 kept, 0.1 too easy

    def test_single_concept_batch_keeps_all_positives(self):
        embeddings, _ = random_batch(1, n=4)
        sim = similarity_matrix(embeddings, ["x"] * 4)
        mined = mine_pairs(sim, PARAMS)
        for i in range(4):
            assert set(mined.positives[i]) == set(range(4)) - {i}
            assert mined.negatives[i] == ()

    def test_no_positive_anchor_keeps_all_negatives(self):
        embeddings, _ = random_batch(2, n=3)
        sim = similarity_matrix(embeddings, ["a", "b", "c"])
        mined = mine_pairs(sim, PARAMS)
        for i in range(3):
            assert mined.positives[i] == ()
            assert set(mined.negatives[i]) == set(range(3)) - {i}

    def test_singleton_batch(self):
        sim = similarity_matrix(np.array([[1.0, 0.0]]), ["a"])
        mined = mine_pairs(sim, PARAMS)
        assert mined.positives == ((),)
        assert mined.negatives == ((),)

    def test_self_pair_never_included(self):
        embeddings, labels = random_batch(3, n=6)
        mined = mine_pairs(similarity_matrix(embeddings, labels), PARAMS)
        for i in range(6):
            assert i not in mined.positives[i]
            assert i not in mined.negatives[i]


class TestLossValues:
    def test_same_concept_pair_scalar_case(self):
        y = np.array([[1.0, 0.0], [0.5, math.sqrt(3) / 2]])  # S12 = 0.5
        sim = similarity_matrix(y, ["a", "a"])
        loss = ms_loss(sim, mine_pairs(sim, PARAMS), PARAMS)
        assert loss == pytest.approx(math.log(1 + math.e) / 2, abs=1e-12)

    def test_different_concept_pair_scalar_case(self):
        y = np.array([[1.0, 0.0], [0.99, math.sqrt(1 - 0.99**2)]])  # S12 = 0.99
        sim = similarity_matrix(y, ["a", "b"])
        loss = ms_loss(sim, mine_pairs(sim, PARAMS), PARAMS)
        expected = math.log1p(math.exp(50 * (0.99 - 1.0))) / 50
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_empty_mined_sets_zero_loss(self):
        sim = similarity_matrix(np.array([[1.0, 0.0]]), ["a"])
        mined = MinedPairs(positives=((),), negatives=((),))
        assert ms_loss(sim, mined, PARAMS) == 0.0

    def test_loss_nonnegative_and_zero_iff_unmined(self):
        for seed in range(40):
            embeddings, labels = random_batch(seed)
            sim = similarity_matrix(embeddings, labels)
            mined = mine_pairs(sim, PARAMS)
            loss = ms_loss(sim, mined, PARAMS)
            assert loss >= 0.0
            any_pair = any(p or n for p, n in zip(mined.positives, mined.negatives))
            assert (loss > 0.0) == any_pair

    def test_matches_naive_oracle(self):
        for seed in range(25):
            embeddings, labels = random_batch(seed, n=7, n_labels=3)
            sim = similarity_matrix(embeddings, labels)
            mined = mine_pairs(sim, PARAMS)
            expected = oracle_ms_loss(
                sim.matrix, mined.positives, mined.negatives,
                PARAMS.alpha, PARAMS.beta, PARAMS.base,
            )
            assert ms_loss(sim, mined, PARAMS) == pytest.approx(expected, rel=1e-12)

    def test_numerically_stable_for_large_exponents(self):
        # base far below the similarities forces exp(beta * ~2) per term
        params = MSLossParams(alpha=2.0, beta=400.0, base=-1.0, margin=0.1)
        y = unit_rows(np.array([[1.0, 0.0], [0.9, 0.1]]))
        sim = similarity_matrix(y, ["a", "b"])
        loss = ms_loss(sim, mine_pairs(sim, params), params)
        assert math.isfinite(loss)
        # log(1 + e^x) ~ x for large x, so per-anchor term ~ (S - base)
        assert loss == pytest.approx(sim.matrix[0, 1] - params.base, rel=1e-3)

    def test_non_finite_similarities_rejected(self):
        s = np.array([[1.0, np.nan], [np.nan, 1.0]])
        sim = SimilarityMatrix(s, ("a", "b"))
        mined = MinedPairs(positives=((), ()), negatives=((1,), (0,)))
        with pytest.raises(CtxnormError):
            ms_loss(sim, mined, PARAMS)

    def test_monotone_in_kept_similarities(self):
        base_s = np.array([[1.0, 0.6, 0.3], [0.6, 1.0, 0.2], [0.3, 0.2, 1.0]])
        labels = ("a", "a", "b")
        mined = MinedPairs(positives=((1,), (0,), ()), negatives=((2,), (2,), (0, 1)))

        def loss_with(s01, s02):
            s = base_s.copy()
            s[0, 1] = s[1, 0] = s01
            s[0, 2] = s[2, 0] = s02
            return ms_loss(SimilarityMatrix(s, labels), mined, PARAMS)

        # raising a kept positive similarity strictly lowers the loss
        assert loss_with(0.7, 0.3) < loss_with(0.6, 0.3)
        # raising a kept negative similarity strictly raises it
        assert loss_with(0.6, 0.4) > loss_with(0.6, 0.3)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariance(self, seed):
        embeddings, labels = random_batch(seed)
        sim = similarity_matrix(embeddings, labels)
        loss = ms_loss(sim, mine_pairs(sim, PARAMS), PARAMS)
        perm = np.random.default_rng(seed + 1).permutation(len(labels))
        shuffled = similarity_matrix(embeddings[perm], [labels[i] for i in perm])
        loss_perm = ms_loss(shuffled, mine_pairs(shuffled, PARAMS), PARAMS)
        assert loss_perm == pytest.approx(loss, abs=1e-12)


class TestLossGradient:
    def test_no_mined_pairs_zero_gradient(self):
        loss, grads = ms_loss_grad(np.array([[1.0, 0.0]]), ["a"], PARAMS)
        assert loss == 0.0
        assert not grads.any()

    def test_matches_finite_differences(self):
        failures = 0
        for seed in range(120):
            embeddings, labels = random_batch(seed, n=6, dim=8)
            loss, grads = ms_loss_grad(embeddings, labels, PARAMS)

            def loss_at(v):
                y = v / np.linalg.norm(v, axis=1, keepdims=True)
                sim = similarity_matrix(y, labels)
                return ms_loss(sim, mine_pairs(sim, PARAMS), PARAMS)

            h = 1e-6
            fd = np.zeros_like(grads)
            for i in range(6):
                for j in range(8):
                    vp = embeddings.copy()
                    vp[i, j] += h
                    vm = embeddings.copy()
                    vm[i, j] -= h
                    fd[i, j] = (loss_at(vp) - loss_at(vm)) / (2 * h)
            denom = max(np.linalg.norm(grads), np.linalg.norm(fd))
            if denom < 1e-12:
                continue
            if np.linalg.norm(grads - fd) / denom >= 1e-5:
                failures += 1
        assert failures == 0

    def test_duplicated_entities_get_equal_gradients(self):
        embeddings, labels = random_batch(9, n=4, n_labels=2)
        doubled = np.vstack([embeddings, embeddings])
        doubled_labels = labels + labels
        _, grads = ms_loss_grad(doubled, doubled_labels, PARAMS)
        assert np.allclose(grads[:4], grads[4:], atol=1e-12)

    def test_gradient_orthogonal_to_embedding(self):
        # chaining through normalization kills the radial component
        embeddings, labels = random_batch(13)
        _, grads = ms_loss_grad(embeddings, labels, PARAMS)
        radial = np.einsum("ij,ij->i", grads, embeddings)
        assert np.allclose(radial, 0.0, atol=1e-12)


class TestParams:
    def test_invalid_temperatures(self):
        with pytest.raises(ValueError):
            MSLossParams(alpha=0.0)
        with pytest.raises(ValueError):
            MSLossParams(beta=-1.0)
        with pytest.raises(ValueError):
            MSLossParams(margin=-0.1)

    def test_published_defaults(self):
        params = MSLossParams()
        assert (params.alpha, params.beta, params.base) == (2.0, 50.0, 1.0)
