"""Concept-balanced mini-batch training of the encoder against the MS loss.

Each mini-batch samples ``concepts_per_batch`` distinct concepts and, for
every sampled concept, ``sentences_per_concept`` mentions drawn from
distinct sentences, so every concept contributes at least one positive
pair and everything else in the batch serves as its negatives.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .dictionary import ConceptId
from .encoder import EncoderParams, MentionInput, SparseFeatures, featurize, mention_input_from_span
from .errors import TrainingError
from .linker import LinkedSentence, MentionRef
from .losses import MSLossParams, mine_pairs, similarity_gradient, similarity_matrix


@dataclass(frozen=True)
class TrainConfig:
    concepts_per_batch: int = 16
    sentences_per_concept: int = 2
    learning_rate: float = 1e-2
    steps: int = 100
    seed: int = 0
    loss_params: MSLossParams = field(default_factory=MSLossParams)

    def __post_init__(self) -> None:
        if self.concepts_per_batch < 2:
            raise ValueError("concepts_per_batch must be >= 2")
        if self.sentences_per_concept < 2:
            raise ValueError("sentences_per_concept must be >= 2")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")


@dataclass
class PoolEntry:
    ref: MentionRef
    mention: MentionInput


@dataclass
class TrainingPool:
    """Mentions grouped by concept, then by sentence within the concept."""

    # concept -> sentence key -> entries for that sentence
    by_concept: dict[ConceptId, dict[tuple[str, int], list[PoolEntry]]]
    dropped_concepts: int = 0

    @property
    def concepts(self) -> list[ConceptId]:
        return sorted(self.by_concept)

    def __len__(self) -> int:
        return len(self.by_concept)


def build_pool(linked: list[LinkedSentence], min_sentences: int = 2) -> TrainingPool:
    """Index mentions by concept; drop concepts seen in too few distinct sentences."""
    by_concept: dict[ConceptId, dict[tuple[str, int], list[PoolEntry]]] = {}
    for sent in linked:
        key = (sent.doc_id, sent.sent_id)
        for mention_index, span in enumerate(sent.mentions):
            entry = PoolEntry(
                ref=MentionRef(sent.doc_id, sent.sent_id, mention_index),
                mention=mention_input_from_span(sent.text, span.start, span.end),
            )
            by_concept.setdefault(span.concept, {}).setdefault(key, []).append(entry)
    kept = {c: groups for c, groups in by_concept.items() if len(groups) >= min_sentences}
    dropped = len(by_concept) - len(kept)
    if not kept:
        raise TrainingError(
            f"training pool is empty ({dropped} concepts dropped below "
            f"{min_sentences} distinct sentences)"
        )
    return TrainingPool(by_concept=kept, dropped_concepts=dropped)


def sample_minibatch(
    pool: TrainingPool, config: TrainConfig, rng: random.Random
) -> list[tuple[MentionInput, ConceptId]]:
    """Sample concepts_per_batch concepts x sentences_per_concept distinct sentences."""
    concepts = pool.concepts
    if len(concepts) < config.concepts_per_batch:
        raise TrainingError(
            f"pool has {len(concepts)} concepts, need {config.concepts_per_batch}"
        )
    eligible = [
        c for c in concepts if len(pool.by_concept[c]) >= config.sentences_per_concept
    ]
    if len(eligible) < config.concepts_per_batch:
        raise TrainingError(
            f"only {len(eligible)} concepts have >= {config.sentences_per_concept} "
            "distinct sentences"
        )
    batch: list[tuple[MentionInput, ConceptId]] = []
    for concept in rng.sample(eligible, config.concepts_per_batch):
        groups = pool.by_concept[concept]
        sentence_keys = rng.sample(sorted(groups), config.sentences_per_concept)
        for key in sentence_keys:
            entry = rng.choice(groups[key])
            batch.append((entry.mention, concept))
    return batch


def batch_loss_and_grad(
    params: EncoderParams,
    batch: list[tuple[MentionInput, ConceptId]],
    loss_params: MSLossParams,
    feature_cache: dict[MentionInput, SparseFeatures] | None = None,
) -> tuple[float, dict[int, np.ndarray]]:
    """MS loss of a batch plus its gradient w.r.t. projection rows.

    Runs the full chain featurize -> project -> normalize -> cosine ->
    mine -> loss and backpropagates analytically.  The gradient is
    returned sparsely as {feature row id: d-vector}; rows of mentions
    that hit the zero-feature fallback receive no gradient (the fallback
    embedding is constant).
    """
    feats: list[SparseFeatures] = []
    for mention, _ in batch:
        if feature_cache is not None and mention in feature_cache:
            feats.append(feature_cache[mention])
        else:
            f = featurize(mention, params.window, params.feature_space, params.hash_seed)
            if feature_cache is not None:
                feature_cache[mention] = f
            feats.append(f)

    dim = params.dim
    n = len(batch)
    embeddings = np.zeros((n, dim), dtype=np.float64)
    norms = np.zeros(n, dtype=np.float64)
    for row, f in enumerate(feats):
        if len(f.indices) == 0:
            embeddings[row, 0] = 1.0  # constant fallback, stays out of the gradient
            norms[row] = 0.0
            continue
        vec = f.values @ params.projection[f.indices]
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            embeddings[row, 0] = 1.0
            norms[row] = 0.0
        else:
            embeddings[row] = vec / norm
            norms[row] = norm

    labels = tuple(concept for _, concept in batch)
    sim = similarity_matrix(embeddings, labels)
    mined = mine_pairs(sim, loss_params)
    loss, g_s = similarity_gradient(sim, mined, loss_params)
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss!r}")
    g_y = (g_s + g_s.T) @ embeddings

    grad_rows: dict[int, np.ndarray] = {}
    for row, f in enumerate(feats):
        if norms[row] == 0.0:
            continue
        y = embeddings[row]
        g_v = (g_y[row] - y * float(y @ g_y[row])) / norms[row]
        if not np.all(np.isfinite(g_v)):
            raise TrainingError(f"non-finite gradient for batch row {row}")
        for fid, value in zip(f.indices.tolist(), f.values):
            acc = grad_rows.get(fid)
            if acc is None:
                grad_rows[fid] = value * g_v
            else:
                acc += value * g_v
    return loss, grad_rows


def train_step(
    params: EncoderParams,
    batch: list[tuple[MentionInput, ConceptId]],
    config: TrainConfig,
) -> tuple[EncoderParams, float]:
    """One gradient-descent step; returns updated params and the pre-step loss."""
    loss, grad_rows = batch_loss_and_grad(params, batch, config.loss_params)
    if config.learning_rate == 0.0 or not grad_rows:
        return params, loss
    updated = params.copy()
    _apply_update(updated.projection, grad_rows, config.learning_rate)
    return updated, loss


def _apply_update(projection: np.ndarray, grad_rows: dict[int, np.ndarray], lr: float) -> None:
    for fid, grad in grad_rows.items():
        projection[fid] -= lr * grad


def train(
    pool: TrainingPool,
    initial: EncoderParams,
    config: TrainConfig,
) -> tuple[EncoderParams, list[float]]:
    """Run ``config.steps`` sample+step iterations; returns params and loss curve.

    Fully deterministic for a fixed (pool, initial params, config.seed).
    The projection is copied once up front and updated in place across
    steps, so the caller's params are never mutated.
    """
    rng = random.Random(config.seed)
    params = initial.copy()
    cache: dict[MentionInput, SparseFeatures] = {}
    curve: list[float] = []
    for _ in range(config.steps):
        batch = sample_minibatch(pool, config, rng)
        loss, grad_rows = batch_loss_and_grad(params, batch, config.loss_params, cache)
        curve.append(loss)
        if config.learning_rate != 0.0 and grad_rows:
            _apply_update(params.projection, grad_rows, config.learning_rate)
    return params, curve
