"""Independent brute-force oracles used to cross-check the fast paths.

Everything here is deliberately naive: enumerate, normalize with the
plain string normalizer, sort with explicit keys.  None of it shares code
with the automaton scan, the offset map, or the vectorized search.
"""
from __future__ import annotations

import math

import numpy as np

from ctxnorm.dictionary import Dictionary
from ctxnorm.linker import MentionSpan


def oracle_find_matches(dictionary: Dictionary, text: str) -> list[MentionSpan]:
    """Enumerate every substring, keep boundary-aligned synonym hits, greedy-resolve.

    Candidate spans are original-text spans that (a) do not start or end
    on whitespace, (b) normalize to a dictionary synonym, and (c) sit on
    word boundaries.  Greedy acceptance order is (descending normalized
    length, ascending start, ascending concept id).
    """
    policy = dictionary.policy
    synonym_of = dictionary.synonym_to_concept()
    candidates: list[tuple[int, int, int, str]] = []  # (start, end, norm_len, concept)
    n = len(text)
    for i in range(n):
        if text[i].isspace():
            continue
        if i > 0 and text[i - 1].isalnum():
            continue  # not word-bounded on the left
        for j in range(i + 1, n + 1):
            if text[j - 1].isspace():
                continue
            if j < n and text[j].isalnum():
                continue  # not word-bounded on the right
            normalized = policy.normalize(text[i:j])
            concept = synonym_of.get(normalized)
            if concept is not None:
                candidates.append((i, j, len(normalized), concept))

    candidates.sort(key=lambda c: (-c[2], c[0], c[3]))
    accepted: list[tuple[int, int, str]] = []
    for start, end, _, concept in candidates:
        overlaps = any(not (end <= a or start >= b) for a, b, _ in accepted)
        if not overlaps:
            accepted.append((start, end, concept))
    accepted.sort()
    return [MentionSpan(start, end, concept) for start, end, concept in accepted]


def oracle_knn(matrix: np.ndarray, query: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Full scan with an explicit python sort; ties keep record order."""
    scored = []
    for row in range(matrix.shape[0]):
        sim = float(sum(matrix[row][c] * query[c] for c in range(len(query))))
        scored.append((row, sim))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[: min(k, len(scored))]


def oracle_ms_loss(similarities: np.ndarray, positives, negatives, alpha, beta, base) -> float:
    """Direct transcription of the loss, summed with plain floats."""
    n = similarities.shape[0]
    total = 0.0
    for i in range(n):
        pos_sum = 0.0
        for k in positives[i]:
            pos_sum += math.exp(-alpha * (similarities[i][k] - base))
        neg_sum = 0.0
        for k in negatives[i]:
            neg_sum += math.exp(beta * (similarities[i][k] - base))
        total += math.log(1.0 + pos_sum) / alpha + math.log(1.0 + neg_sum) / beta
    return total / n


def oracle_tfidf_vectors(synonyms: list[str]) -> tuple[dict[str, int], np.ndarray]:
    """Char 1/2-gram tf-idf from first principles: idf = ln((1+N)/(1+df)) + 1."""
    def grams(s: str) -> list[str]:
        out = [c for c in s]
        out += [s[i : i + 2] for i in range(len(s) - 1)]
        return out

    vocab: dict[str, int] = {}
    for s in synonyms:
        for g in grams(s):
            if g not in vocab:
                vocab[g] = len(vocab)
    df = {g: sum(1 for s in synonyms if g in set(grams(s))) for g in vocab}
    n = len(synonyms)
    vectors = np.zeros((n, len(vocab)))
    for row, s in enumerate(synonyms):
        for g in grams(s):
            vectors[row, vocab[g]] += 1.0
        for g, col in vocab.items():
            vectors[row, col] *= math.log((1.0 + n) / (1.0 + df[g])) + 1.0
        norm = math.sqrt(float((vectors[row] ** 2).sum()))
        if norm > 0:
            vectors[row] /= norm
    return vocab, vectors


def random_matcher_instance(
    rng, max_synonyms: int = 12, max_chunks: int = 14
) -> tuple[list[tuple[str, str]], str]:
    """A small dictionary plus a text seeded with (overlapping) synonyms.

    Words come from a tiny alphabet so synonym fragments collide often,
    which is what makes the overlap-resolution path interesting.
    """
    words = ["ab", "bc", "ca", "abc", "a", "b", "cab", "bca"]
    n_syn = rng.randint(1, max_synonyms)
    pairs = []
    used = set()
    for i in range(n_syn):
        length = rng.randint(1, 3)
        synonym = " ".join(rng.choice(words) for _ in range(length))
        if synonym in used:
            continue
        used.add(synonym)
        pairs.append((f"K{i:03d}", synonym))
    # text mixes raw word soup with planted synonyms and odd casing/spacing
    chunks = []
    for _ in range(rng.randint(1, max_chunks)):
        roll = rng.random()
        if roll < 0.45 and pairs:
            planted = rng.choice(pairs)[1]
            if rng.random() < 0.3:
                planted = planted.upper()
            if rng.random() < 0.2:
                planted = planted.replace(" ", "  ")
            chunks.append(planted)
        elif roll < 0.8:
            chunks.append(rng.choice(words))
        else:
            chunks.append(rng.choice([",", ".", "x,y", "7", "--"]))
    sep = [" ", "  ", " , "]
    text = ""
    for i, chunk in enumerate(chunks):
        if i:
            text += rng.choice(sep)
        text += chunk
    return pairs, text[:200]
