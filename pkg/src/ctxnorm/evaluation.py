"""Accuracy evaluation over gold mentions, plus a character tf-idf baseline.

The baseline embeds every dictionary synonym as an L2-normalized tf-idf
vector of character uni- and bi-grams (idf = ln((1+N)/(1+df)) + 1, the
smoothed variant) and predicts, from the mention surface alone, the
concept of the most cosine-similar synonym.  It sees no context, which is
exactly what makes it a useful foil for the context-matching model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Callable, Iterable, Iterator, Sequence

import numpy as np

from .dictionary import ConceptId, Dictionary
from .errors import CorpusError, CtxnormError


@dataclass(frozen=True)
class GoldMention:
    doc_id: str
    sent_id: int
    text: str
    start: int
    end: int
    gold_concept: ConceptId

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end <= len(self.text):
            raise ValueError(
                f"gold span [{self.start}, {self.end}) invalid for text of "
                f"length {len(self.text)}"
            )

    @property
    def surface(self) -> str:
        return self.text[self.start : self.end]


def filter_gold(gold: Iterable[GoldMention], dictionary: Dictionary) -> list[GoldMention]:
    """Keep only mentions whose gold concept exists in the dictionary."""
    return [g for g in gold if g.gold_concept in dictionary]


def evaluate_accuracy(predictions: Sequence[ConceptId], gold: Sequence[GoldMention]) -> float:
    if len(predictions) != len(gold):
        raise CtxnormError(
            f"{len(predictions)} predictions for {len(gold)} gold mentions"
        )
    if not gold:
        return 0.0
    correct = sum(1 for p, g in zip(predictions, gold) if p == g.gold_concept)
    return correct / len(gold)


def confusion_counts(
    predictions: Sequence[ConceptId], gold: Sequence[GoldMention]
) -> dict[tuple[ConceptId, ConceptId], int]:
    """(gold concept, predicted concept) -> count."""
    if len(predictions) != len(gold):
        raise CtxnormError(
            f"{len(predictions)} predictions for {len(gold)} gold mentions"
        )
    counts: dict[tuple[ConceptId, ConceptId], int] = {}
    for p, g in zip(predictions, gold):
        key = (g.gold_concept, p)
        counts[key] = counts.get(key, 0) + 1
    return counts


def _char_ngrams(text: str) -> Iterator[str]:
    for n in (1, 2):
        for i in range(len(text) - n + 1):
            yield text[i : i + n]


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]      # n-gram -> column
    idf: np.ndarray                 # (V,)
    synonym_matrix: np.ndarray      # (n_synonyms, V), rows L2-normalized
    synonyms: list[str]             # sorted lexicographically
    concepts: list[ConceptId]       # concept of each synonym row
    normalize: Callable[[str], str] | None = None  # applied to queries

    def vectorize(self, text: str) -> np.ndarray:
        vec = np.zeros(len(self.vocabulary), dtype=np.float64)
        for gram in _char_ngrams(text):
            col = self.vocabulary.get(gram)
            if col is not None:
                vec[col] += 1.0
        vec *= self.idf
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def tfidf_fit(dictionary: Dictionary) -> TfidfModel:
    """Fit idf over the synonym collection (each synonym is one document)."""
    if dictionary.concept_count == 0:
        raise CtxnormError("cannot fit tf-idf on an empty dictionary")
    pairs = sorted(
        (synonym, concept) for synonym, concept in dictionary.synonym_to_concept().items()
    )
    synonyms = [s for s, _ in pairs]
    concepts = [c for _, c in pairs]

    vocabulary: dict[str, int] = {}
    df: dict[str, int] = {}
    for synonym in synonyms:
        seen = set(_char_ngrams(synonym))
        for gram in seen:
            if gram not in vocabulary:
                vocabulary[gram] = len(vocabulary)
            df[gram] = df.get(gram, 0) + 1

    n_docs = len(synonyms)
    idf = np.zeros(len(vocabulary), dtype=np.float64)
    for gram, col in vocabulary.items():
        idf[col] = np.log((1.0 + n_docs) / (1.0 + df[gram])) + 1.0

    matrix = np.zeros((n_docs, len(vocabulary)), dtype=np.float64)
    for row, synonym in enumerate(synonyms):
        for gram in _char_ngrams(synonym):
            matrix[row, vocabulary[gram]] += 1.0
    matrix *= idf
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    matrix /= norms

    return TfidfModel(
        vocabulary=vocabulary,
        idf=idf,
        synonym_matrix=matrix,
        synonyms=synonyms,
        concepts=concepts,
        normalize=dictionary.policy.normalize,
    )


def tfidf_predict(model: TfidfModel, mention_surface: str) -> ConceptId:
    """Concept of the most similar synonym; ties go to lexicographic order.

    Rows are stored lexicographically sorted and argmax returns the first
    maximum, so ties resolve to the lexicographically smallest synonym.
    """
    if not mention_surface or not mention_surface.strip():
        raise CtxnormError("cannot predict from an empty mention surface")
    surface = model.normalize(mention_surface) if model.normalize else mention_surface
    query = model.vectorize(surface)
    sims = model.synonym_matrix @ query
    return model.concepts[int(np.argmax(sims))]


# --- gold file format -----------------------------------------------------------
#
# Mirrors the linked-corpus JSON-Lines, with "gold_concept" replacing "concept":
# {"doc_id", "sent_id", "text", "mentions": [{"start", "end", "gold_concept"}]}


def read_gold(handle: IO[str], source: str = "<stream>") -> Iterator[GoldMention]:
    for line_no, line in enumerate(handle, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            for mention in record["mentions"]:
                yield GoldMention(
                    doc_id=str(record["doc_id"]),
                    sent_id=int(record["sent_id"]),
                    text=str(record["text"]),
                    start=int(mention["start"]),
                    end=int(mention["end"]),
                    gold_concept=str(mention["gold_concept"]),
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{source}:{line_no}: bad gold record: {exc}") from exc


def write_gold(handle: IO[str], gold: Iterable[GoldMention]) -> int:
    """One record per gold sentence occurrence, mentions grouped by sentence."""
    count = 0
    grouped: dict[tuple[str, int, str], list[GoldMention]] = {}
    order: list[tuple[str, int, str]] = []
    for g in gold:
        key = (g.doc_id, g.sent_id, g.text)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(g)
    for key in order:
        doc_id, sent_id, text = key
        record = {
            "doc_id": doc_id,
            "sent_id": sent_id,
            "text": text,
            "mentions": [
                {"start": g.start, "end": g.end, "gold_concept": g.gold_concept}
                for g in grouped[key]
            ],
        }
        handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        count += len(grouped[key])
    return count
