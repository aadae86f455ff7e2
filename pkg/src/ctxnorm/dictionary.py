"""Concept dictionary: loading, validation, downsampling, lookup.

The on-disk format is two-column TSV, one ``concept_id<TAB>synonym`` pair
per line, UTF-8.  Synonyms are normalized at load time; a normalized
synonym may belong to exactly one concept, so the dictionary doubles as a
functional synonym -> concept map for the linker.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .errors import AmbiguousSynonymError, DictionaryError, DictionaryParseError
from .textnorm import DEFAULT_POLICY, NormalizationPolicy

ConceptId = str


@dataclass
class Dictionary:
    """Mapping from concept id to its ordered list of normalized synonyms."""

    entries: dict[ConceptId, list[str]]
    policy: NormalizationPolicy = DEFAULT_POLICY
    _by_synonym: dict[str, ConceptId] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self._by_synonym:
            for concept, synonyms in self.entries.items():
                for synonym in synonyms:
                    self._by_synonym[synonym] = concept

    @property
    def concept_count(self) -> int:
        return len(self.entries)

    @property
    def synonym_count(self) -> int:
        return sum(len(s) for s in self.entries.values())

    def synonym_to_concept(self) -> dict[str, ConceptId]:
        """Normalized synonym -> concept map (shared, do not mutate)."""
        return self._by_synonym

    def __contains__(self, concept: ConceptId) -> bool:
        return concept in self.entries


def build_dictionary(
    pairs: Iterable[tuple[ConceptId, str]],
    policy: NormalizationPolicy = DEFAULT_POLICY,
    source: str = "<memory>",
) -> Dictionary:
    """Assemble a Dictionary from (concept, synonym) pairs.

    Duplicate (concept, synonym) pairs are dropped; a synonym seen under
    two concepts raises AmbiguousSynonymError.
    """
    entries: dict[ConceptId, list[str]] = {}
    owner: dict[str, ConceptId] = {}
    for concept, raw_synonym in pairs:
        if not concept or any(ch.isspace() for ch in concept):
            raise DictionaryError(
                f"{source}: invalid concept id {concept!r} (empty or contains whitespace)"
            )
        synonym = policy.normalize(raw_synonym)
        if not synonym:
            raise DictionaryError(
                f"{source}: synonym for {concept!r} is empty after normalization"
            )
        seen_by = owner.get(synonym)
        if seen_by is None:
            owner[synonym] = concept
            entries.setdefault(concept, []).append(synonym)
        elif seen_by != concept:
            raise AmbiguousSynonymError(synonym, seen_by, concept)
        # else: duplicate pair, dedup silently
    return Dictionary(entries=entries, policy=policy, _by_synonym=owner)


def load_dictionary(path: str | Path, policy: NormalizationPolicy = DEFAULT_POLICY) -> Dictionary:
    """Load a two-column TSV dictionary file."""
    path = Path(path)

    def parse(handle: IO[str]) -> Iterable[tuple[str, str]]:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DictionaryParseError(
                    str(path), line_no, f"expected 2 tab-separated columns, got {len(parts)}"
                )
            yield parts[0], parts[1]

    with path.open("r", encoding="utf-8") as handle:
        return build_dictionary(parse(handle), policy=policy, source=str(path))


def save_dictionary(dictionary: Dictionary, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for concept, synonyms in dictionary.entries.items():
            for synonym in synonyms:
                handle.write(f"{concept}\t{synonym}\n")


def downsample_synonyms(dictionary: Dictionary, fraction: float, seed: int) -> Dictionary:
    """Keep ceil(fraction * n) synonyms per concept, sampled without replacement.

    Every concept retains at least one synonym (ceil never rounds to zero
    for fraction > 0), and the concept set is preserved exactly.
    Deterministic for a fixed seed.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    rng = random.Random(seed)
    entries: dict[ConceptId, list[str]] = {}
    for concept in sorted(dictionary.entries):
        synonyms = dictionary.entries[concept]
        keep = math.ceil(fraction * len(synonyms))
        if keep >= len(synonyms):
            entries[concept] = list(synonyms)
        else:
            chosen = sorted(rng.sample(range(len(synonyms)), keep))
            entries[concept] = [synonyms[i] for i in chosen]
    return Dictionary(entries=entries, policy=dictionary.policy)


def lookup_synonym(dictionary: Dictionary, surface: str) -> ConceptId | None:
    """Concept whose normalized synonym equals the normalized surface, if any."""
    return dictionary.synonym_to_concept().get(dictionary.policy.normalize(surface))


def dictionary_stats(dictionary: Dictionary) -> dict[str, float]:
    concepts = dictionary.concept_count
    synonyms = dictionary.synonym_count
    return {
        "concepts": concepts,
        "synonyms": synonyms,
        "mean_synonyms_per_concept": synonyms / concepts if concepts else 0.0,
    }
