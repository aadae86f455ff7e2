"""Neighbor database: embed every linked mention, search it, vote on concepts.

Prediction is K-nearest-neighbor context matching: encode the query
mention, retrieve the K most cosine-similar database mentions, and
return the most frequent concept among them.  Vote ties break by higher
summed similarity, then lexicographically smaller concept id; search
ties break by record order.  Search is exact (exhaustive) by default; an
approximate backend may be plugged in only if it passes the same oracle
suite at recall >= 0.99.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import IO, Callable, Iterable

import numpy as np

from .dictionary import ConceptId
from .encoder import EncoderParams, MentionInput, encode, fingerprint, mention_input_from_span
from .errors import FingerprintMismatchError, NeighborIndexError
from .linker import LinkedSentence, MentionRef

logger = logging.getLogger(__name__)

_INDEX_FORMAT = 1

# An approximate search backend maps (matrix, query, k) -> candidate row ids.
SearchBackend = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class EmbeddingRecord:
    embedding: np.ndarray  # unit-norm (dim,)
    concept: ConceptId
    ref: MentionRef
    surface: str


@dataclass
class NeighborIndex:
    records: list[EmbeddingRecord]
    dim: int
    encoder_fingerprint: str
    _matrix: np.ndarray | None = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = (
                np.stack([r.embedding for r in self.records])
                if self.records
                else np.zeros((0, self.dim))
            )
        return self._matrix

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class Prediction:
    concept: ConceptId
    neighbors: tuple[tuple[EmbeddingRecord, float], ...]  # descending similarity
    votes: dict[ConceptId, int]


def build_index(params: EncoderParams, linked: Iterable[LinkedSentence]) -> NeighborIndex:
    """One record per mention, in deterministic (doc, sent, mention) order."""
    keyed: list[tuple[tuple[str, int, int], EmbeddingRecord]] = []
    for sent in linked:
        for mention_index, span in enumerate(sent.mentions):
            mention = mention_input_from_span(sent.text, span.start, span.end)
            record = EmbeddingRecord(
                embedding=encode(params, mention),
                concept=span.concept,
                ref=MentionRef(sent.doc_id, sent.sent_id, mention_index),
                surface=sent.text[span.start : span.end],
            )
            keyed.append(((sent.doc_id, sent.sent_id, mention_index), record))
    if not keyed:
        raise NeighborIndexError("cannot build an index from an empty store")
    keyed.sort(key=lambda item: item[0])
    return NeighborIndex(
        records=[record for _, record in keyed],
        dim=params.dim,
        encoder_fingerprint=fingerprint(params),
    )


def subsample_index(index: NeighborIndex, max_per_synonym: int, seed: int) -> NeighborIndex:
    """Cap the number of records kept per distinct (normalized) synonym surface.

    Groups by the surface string as matched; keeps at most
    ``max_per_synonym`` records per group, chosen uniformly, preserving
    record order.  Never empties a group.
    """
    if max_per_synonym < 1:
        raise ValueError("max_per_synonym must be >= 1")
    rng = np.random.default_rng(seed)
    groups: dict[str, list[int]] = {}
    for i, record in enumerate(index.records):
        surface = " ".join(record.surface.casefold().split())
        groups.setdefault(surface, []).append(i)
    keep: list[int] = []
    for surface in sorted(groups):
        members = groups[surface]
        if len(members) <= max_per_synonym:
            keep.extend(members)
        else:
            chosen = rng.choice(len(members), size=max_per_synonym, replace=False)
            keep.extend(members[i] for i in sorted(chosen.tolist()))
    keep.sort()
    return NeighborIndex(
        records=[index.records[i] for i in keep],
        dim=index.dim,
        encoder_fingerprint=index.encoder_fingerprint,
    )


def knn_search(
    index: NeighborIndex,
    query: np.ndarray,
    k: int,
    backend: SearchBackend | None = None,
) -> list[tuple[EmbeddingRecord, float]]:
    """Top-k records by cosine similarity; ties broken by record order.

    Asking for more neighbors than the index holds returns every record
    (logged, not fatal).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dim,):
        raise NeighborIndexError(f"query shape {query.shape} != ({index.dim},)")
    if len(index) == 0:
        raise NeighborIndexError("index is empty")
    if k > len(index):
        logger.warning("k=%d exceeds index size %d; returning all records", k, len(index))
        k = len(index)
    sims = index.matrix @ query
    if backend is not None:
        rows = np.asarray(backend(index.matrix, query, k))
        rows = rows[np.argsort(-sims[rows], kind="stable")][:k]
    else:
        rows = np.argsort(-sims, kind="stable")[:k]
    return [(index.records[i], float(sims[i])) for i in rows]


def verify_fingerprint(index: NeighborIndex, params: EncoderParams) -> None:
    """Raise unless ``params`` is the encoder the index was built with."""
    if fingerprint(params) != index.encoder_fingerprint:
        raise FingerprintMismatchError(
            "encoder fingerprint does not match the one recorded in the index"
        )


def predict_concept(
    index: NeighborIndex,
    params: EncoderParams,
    inp: MentionInput,
    k: int = 15,
    check_fingerprint: bool = True,
) -> Prediction:
    """Majority vote over the k nearest database mentions.

    Ties break by higher summed similarity, then lexicographic concept id.
    Callers predicting in a loop should ``verify_fingerprint`` once and
    pass ``check_fingerprint=False`` (hashing the projection per query is
    needlessly expensive).
    """
    if check_fingerprint:
        verify_fingerprint(index, params)
    neighbors = knn_search(index, encode(params, inp), k)
    votes: dict[ConceptId, int] = {}
    sums: dict[ConceptId, float] = {}
    for record, sim in neighbors:
        votes[record.concept] = votes.get(record.concept, 0) + 1
        sums[record.concept] = sums.get(record.concept, 0.0) + sim
    winner = min(votes, key=lambda c: (-votes[c], -sums[c], c))
    return Prediction(concept=winner, neighbors=tuple(neighbors), votes=votes)


# --- index file format ---------------------------------------------------------
#
# JSON-Lines: a header line {"format", "d", "count", "fingerprint"} followed by
# one record per line:
# {"concept", "embedding": [float...], "doc_id", "sent_id", "mention_index",
#  "surface"}


def write_index(handle: IO[str], index: NeighborIndex) -> None:
    header = {
        "format": _INDEX_FORMAT,
        "d": index.dim,
        "count": len(index),
        "fingerprint": index.encoder_fingerprint,
    }
    handle.write(json.dumps(header, sort_keys=True) + "\n")
    for record in index.records:
        row = {
            "concept": record.concept,
            "embedding": record.embedding.tolist(),
            "doc_id": record.ref.doc_id,
            "sent_id": record.ref.sent_id,
            "mention_index": record.ref.mention_index,
            "surface": record.surface,
        }
        handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_index(handle: IO[str], source: str = "<stream>") -> NeighborIndex:
    first = handle.readline()
    if not first.strip():
        raise NeighborIndexError(f"{source}: missing index header")
    try:
        header = json.loads(first)
        if header.get("format") != _INDEX_FORMAT:
            raise NeighborIndexError(
                f"{source}: unsupported index format {header.get('format')!r}"
            )
        dim = int(header["d"])
        count = int(header["count"])
        fp = str(header["fingerprint"])
    except (KeyError, TypeError, ValueError) as exc:
        raise NeighborIndexError(f"{source}: bad index header: {exc}") from exc
    records: list[EmbeddingRecord] = []
    for line_no, line in enumerate(handle, start=2):
        line = line.strip()
        if not line:
            continue
        try:
            row = json.loads(line)
            embedding = np.asarray(row["embedding"], dtype=np.float64)
            if embedding.shape != (dim,):
                raise ValueError(f"embedding has shape {embedding.shape}, expected ({dim},)")
            records.append(
                EmbeddingRecord(
                    embedding=embedding,
                    concept=str(row["concept"]),
                    ref=MentionRef(str(row["doc_id"]), int(row["sent_id"]), int(row["mention_index"])),
                    surface=str(row["surface"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise NeighborIndexError(f"{source}:{line_no}: bad index record: {exc}") from exc
    if len(records) != count:
        raise NeighborIndexError(
            f"{source}: header promises {count} records, found {len(records)}"
        )
    return NeighborIndex(records=records, dim=dim, encoder_fingerprint=fp)
