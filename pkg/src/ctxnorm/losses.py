"""Multi-Similarity loss over a mini-batch cosine similarity matrix.

Given unit-norm embeddings with concept labels, the batch similarity
matrix is S = Y Y^T.  Per anchor i, mining keeps the informative pairs:

    negatives k with  S_ik > min_p S_ip - margin
    positives k with  S_ik < max_n S_in + margin

where p/n range over the anchor's raw positives/negatives (self excluded)
and ``margin`` is the mining slack.  If an anchor has no raw negatives,
all of its positives are kept (and vice versa), so single-concept batches
still train instead of silently producing zero loss.

The loss itself is

    L = (1/B) * sum_i [ (1/alpha) * log(1 + sum_{k in P_i} exp(-alpha (S_ik - base)))
                      + (1/beta)  * log(1 + sum_{k in N_i} exp( beta  (S_ik - base))) ]

with ``alpha``/``beta`` the positive/negative temperature scales and
``base`` the similarity offset.  Mining is piecewise constant and treated
as fixed during differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CtxnormError


@dataclass(frozen=True)
class MSLossParams:
    alpha: float = 2.0      # positive-pair temperature
    beta: float = 50.0      # negative-pair temperature
    base: float = 1.0       # offset subtracted from similarities
    margin: float = 0.1     # pair-mining slack

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass(frozen=True)
class SimilarityMatrix:
    matrix: np.ndarray      # (B, B) cosine similarities
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        n = len(self.labels)
        if self.matrix.shape != (n, n):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({n}, {n})")

    def validate(self, tolerance: float = 1e-6) -> None:
        """Check the cosine-matrix invariants; raises on violation."""
        s = self.matrix
        if not np.all(np.isfinite(s)):
            raise CtxnormError("similarity matrix contains non-finite entries")
        if len(self.labels) == 0:
            return
        if not np.allclose(s, s.T, atol=tolerance):
            raise CtxnormError("similarity matrix is not symmetric")
        if not np.allclose(np.diag(s), 1.0, atol=tolerance):
            raise CtxnormError("similarity matrix diagonal is not 1")
        if s.max() > 1.0 + tolerance or s.min() < -1.0 - tolerance:
            raise CtxnormError("similarity matrix entries fall outside [-1, 1]")


@dataclass(frozen=True)
class MinedPairs:
    """Per-anchor kept positive / negative column indices."""

    positives: tuple[tuple[int, ...], ...]
    negatives: tuple[tuple[int, ...], ...]


def similarity_matrix(embeddings: np.ndarray, labels: list[str] | tuple[str, ...]) -> SimilarityMatrix:
    """Pairwise dot products of unit-norm rows (== cosine similarities)."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2:
        raise CtxnormError(f"expected a 2-d embedding array, got shape {embeddings.shape}")
    if embeddings.shape[0] != len(labels):
        raise CtxnormError(
            f"{embeddings.shape[0]} embeddings but {len(labels)} labels"
        )
    return SimilarityMatrix(matrix=embeddings @ embeddings.T, labels=tuple(labels))


def mine_pairs(sim: SimilarityMatrix, params: MSLossParams) -> MinedPairs:
    s = sim.matrix
    labels = sim.labels
    n = len(labels)
    kept_pos: list[tuple[int, ...]] = []
    kept_neg: list[tuple[int, ...]] = []
    for i in range(n):
        raw_pos = [k for k in range(n) if k != i and labels[k] == labels[i]]
        raw_neg = [k for k in range(n) if labels[k] != labels[i]]
        if not raw_neg:
            kept_pos.append(tuple(raw_pos))
            kept_neg.append(())
            continue
        if not raw_pos:
            kept_pos.append(())
            kept_neg.append(tuple(raw_neg))
            continue
        pos_floor = min(s[i, k] for k in raw_pos) - params.margin
        neg_ceiling = max(s[i, k] for k in raw_neg) + params.margin
        kept_neg.append(tuple(k for k in raw_neg if s[i, k] > pos_floor))
        kept_pos.append(tuple(k for k in raw_pos if s[i, k] < neg_ceiling))
    return MinedPairs(positives=tuple(kept_pos), negatives=tuple(kept_neg))


def _log1p_sum_exp(x: np.ndarray) -> float:
    """log(1 + sum(exp(x))) without overflow."""
    if x.size == 0:
        return 0.0
    m = float(np.max(x))
    if m <= 0.0:
        return float(np.log1p(np.sum(np.exp(x))))
    return m + float(np.log(np.exp(-m) + np.sum(np.exp(x - m))))


def ms_loss(sim: SimilarityMatrix, mined: MinedPairs, params: MSLossParams) -> float:
    """Batch-mean Multi-Similarity loss; zero iff every anchor mined nothing."""
    s = sim.matrix
    if not np.all(np.isfinite(s)):
        raise CtxnormError("similarity matrix contains non-finite entries")
    n = len(sim.labels)
    if n == 0:
        return 0.0
    total = 0.0
    for i in range(n):
        pos = np.array(mined.positives[i], dtype=np.intp)
        neg = np.array(mined.negatives[i], dtype=np.intp)
        if pos.size:
            total += _log1p_sum_exp(-params.alpha * (s[i, pos] - params.base)) / params.alpha
        if neg.size:
            total += _log1p_sum_exp(params.beta * (s[i, neg] - params.base)) / params.beta
    return total / n


def similarity_gradient(
    sim: SimilarityMatrix, mined: MinedPairs, params: MSLossParams
) -> tuple[float, np.ndarray]:
    """Loss plus dL/dS as a (B, B) matrix (zero outside mined pairs)."""
    s = sim.matrix
    if not np.all(np.isfinite(s)):
        raise CtxnormError("similarity matrix contains non-finite entries")
    n = len(sim.labels)
    grad = np.zeros_like(s)
    if n == 0:
        return 0.0, grad
    total = 0.0
    for i in range(n):
        pos = np.array(mined.positives[i], dtype=np.intp)
        neg = np.array(mined.negatives[i], dtype=np.intp)
        if pos.size:
            x = -params.alpha * (s[i, pos] - params.base)
            t = _log1p_sum_exp(x)
            total += t / params.alpha
            # d/dS_ik of (1/a) log(1 + sum e^{-a(S-b)}) = -e^{x_k} / (1 + sum e^x)
            grad[i, pos] -= np.exp(x - t)
        if neg.size:
            x = params.beta * (s[i, neg] - params.base)
            t = _log1p_sum_exp(x)
            total += t / params.beta
            grad[i, neg] += np.exp(x - t)
    return total / n, grad / n


def ms_loss_grad(
    embeddings: np.ndarray,
    labels: list[str] | tuple[str, ...],
    params: MSLossParams,
) -> tuple[float, np.ndarray]:
    """Loss and gradient w.r.t. the pre-normalization embedding inputs.

    Embeddings must already be unit-norm; the gradient chains through the
    cosine similarities and through the L2 normalization evaluated at
    those unit vectors, with the mined pair sets held fixed.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    sim = similarity_matrix(embeddings, labels)
    mined = mine_pairs(sim, params)
    loss, g_s = similarity_gradient(sim, mined, params)
    # S = Y Y^T  =>  dL/dY = (G + G^T) Y
    g_y = (g_s + g_s.T) @ embeddings
    # chain through y = v / ||v|| at ||v|| = 1:  dL/dv = (I - y y^T) dL/dy
    scale = np.einsum("ij,ij->i", embeddings, g_y)
    g_v = g_y - embeddings * scale[:, None]
    return loss, g_v
