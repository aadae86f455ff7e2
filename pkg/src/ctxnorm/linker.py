"""Entity linking by multi-pattern dictionary matching.

Raw sentences are scanned with an Aho-Corasick automaton compiled from
the normalized synonym inventory.  Occurrences must align to word
boundaries (non-alphanumeric or string edge on both sides).  Overlaps are
resolved longest-match-first: candidates are accepted greedily in order
of (descending length, ascending start, ascending concept id) and any
candidate overlapping an accepted one is discarded.  Length priority is
deliberate: a longer synonym beats any shorter synonym it overlaps, even
one that starts earlier.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator

from .dictionary import ConceptId, Dictionary
from .errors import CorpusError
from .textnorm import normalize_with_offsets


@dataclass(frozen=True)
class RawSentence:
    doc_id: str
    sent_id: int
    text: str


@dataclass(frozen=True)
class MentionSpan:
    """Character span (Unicode scalar offsets, end exclusive) plus concept."""

    start: int
    end: int
    concept: ConceptId


@dataclass(frozen=True)
class LinkedSentence:
    doc_id: str
    sent_id: int
    text: str
    mentions: tuple[MentionSpan, ...]


@dataclass(frozen=True)
class MentionRef:
    """Addresses one mention: (document, sentence, mention index)."""

    doc_id: str
    sent_id: int
    mention_index: int


class LinkMode(Enum):
    ALL = "all"   # one linked sentence per input sentence, all matches kept
    ONE = "one"   # one linked sentence per match, each carrying that single match


class _Node:
    __slots__ = ("children", "fail", "outputs")

    def __init__(self) -> None:
        self.children: dict[str, _Node] = {}
        self.fail: _Node | None = None
        # (pattern length, concept) for every synonym ending at this state
        self.outputs: list[tuple[int, ConceptId]] = []


class SynonymMatcher:
    """Aho-Corasick automaton over a dictionary's normalized synonyms.

    Immutable once built; safe to share across threads.
    """

    def __init__(self, dictionary: Dictionary) -> None:
        self._dictionary = dictionary
        self._policy = dictionary.policy
        self._root = _Node()
        for synonym, concept in dictionary.synonym_to_concept().items():
            self._insert(synonym, concept)
        self._build_failure_links()

    def _insert(self, pattern: str, concept: ConceptId) -> None:
        node = self._root
        for ch in pattern:
            node = node.children.setdefault(ch, _Node())
        node.outputs.append((len(pattern), concept))

    def _build_failure_links(self) -> None:
        root = self._root
        root.fail = root
        queue: deque[_Node] = deque()
        for child in root.children.values():
            child.fail = root
            queue.append(child)
        while queue:
            current = queue.popleft()
            for ch, child in current.children.items():
                fallback = current.fail
                while fallback is not root and ch not in fallback.children:
                    fallback = fallback.fail
                target = fallback.children.get(ch)
                child.fail = target if target is not None and target is not child else root
                # pull in suffix outputs so one scan reports nested patterns
                child.outputs = child.outputs + child.fail.outputs
                queue.append(child)

    def _scan(self, normalized: str) -> Iterator[tuple[int, int, ConceptId]]:
        """All synonym occurrences in normalized space, as (start, end, concept)."""
        root = self._root
        node = root
        for pos, ch in enumerate(normalized):
            while node is not root and ch not in node.children:
                node = node.fail
            node = node.children.get(ch, root)
            for length, concept in node.outputs:
                yield pos + 1 - length, pos + 1, concept

    def find_matches(self, text: str) -> list[MentionSpan]:
        """Non-overlapping word-boundary matches in original-text offsets."""
        normalized = normalize_with_offsets(text, self._policy)
        candidates = [
            (start, end, concept)
            for start, end, concept in self._scan(normalized.text)
            if _word_bounded(normalized.text, start, end)
            and not normalized.cuts_expansion(start, end)
        ]
        resolved = resolve_overlaps(candidates)
        spans = [
            MentionSpan(*normalized.to_original(start, end), concept)
            for start, end, concept in resolved
        ]
        spans.sort(key=lambda m: m.start)
        return spans


def _word_bounded(text: str, start: int, end: int) -> bool:
    if start > 0 and text[start - 1].isalnum():
        return False
    if end < len(text) and text[end].isalnum():
        return False
    return True


def resolve_overlaps(
    candidates: Iterable[tuple[int, int, ConceptId]],
) -> list[tuple[int, int, ConceptId]]:
    """Greedy longest-match overlap resolution.

    Accept candidates in order of (descending length, ascending start,
    ascending concept id); drop any candidate overlapping an accepted
    one.  Returned spans are sorted by start.
    """
    ordered = sorted(candidates, key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
    accepted: list[tuple[int, int, ConceptId]] = []
    for start, end, concept in ordered:
        if all(end <= a_start or start >= a_end for a_start, a_end, _ in accepted):
            accepted.append((start, end, concept))
    accepted.sort(key=lambda c: c[0])
    return accepted


def find_matches(dictionary: Dictionary, text: str) -> list[MentionSpan]:
    """One-shot matching; prefer a reused SynonymMatcher for whole corpora."""
    return SynonymMatcher(dictionary).find_matches(text)


def link_corpus(
    dictionary: Dictionary | SynonymMatcher,
    sentences: Iterable[RawSentence],
    mode: LinkMode = LinkMode.ALL,
    exclude_doc_ids: frozenset[str] | set[str] = frozenset(),
) -> Iterator[LinkedSentence]:
    """Link a sentence stream; drops excluded documents and matchless sentences.

    ALL mode emits one LinkedSentence per matched input sentence; ONE mode
    emits one copy per match, each copy linking exactly that mention.
    """
    matcher = dictionary if isinstance(dictionary, SynonymMatcher) else SynonymMatcher(dictionary)
    for sentence in sentences:
        if sentence.doc_id in exclude_doc_ids:
            continue
        matches = matcher.find_matches(sentence.text)
        if not matches:
            continue
        if mode is LinkMode.ALL:
            yield LinkedSentence(sentence.doc_id, sentence.sent_id, sentence.text, tuple(matches))
        else:
            for span in matches:
                yield LinkedSentence(sentence.doc_id, sentence.sent_id, sentence.text, (span,))


@dataclass
class CorpusStats:
    sentences: int = 0
    mentions: int = 0
    concepts: int = 0
    sentences_per_concept: dict[ConceptId, int] = field(default_factory=dict)


def corpus_stats(linked: Iterable[LinkedSentence]) -> CorpusStats:
    sentences = 0
    mentions = 0
    seen: dict[ConceptId, set[tuple[str, int]]] = {}
    for sent in linked:
        sentences += 1
        mentions += len(sent.mentions)
        for span in sent.mentions:
            seen.setdefault(span.concept, set()).add((sent.doc_id, sent.sent_id))
    per_concept = {concept: len(keys) for concept, keys in sorted(seen.items())}
    return CorpusStats(
        sentences=sentences,
        mentions=mentions,
        concepts=len(per_concept),
        sentences_per_concept=per_concept,
    )


# --- JSON-Lines corpus formats ------------------------------------------------
#
# Raw:    {"doc_id": str, "sent_id": int, "text": str}
# Linked: {"doc_id", "sent_id", "text",
#          "mentions": [{"start": int, "end": int, "concept": str}]}


def read_raw_sentences(handle: IO[str], source: str = "<stream>") -> Iterator[RawSentence]:
    for line_no, line in enumerate(handle, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            yield RawSentence(
                doc_id=str(record["doc_id"]),
                sent_id=int(record["sent_id"]),
                text=str(record["text"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{source}:{line_no}: bad raw-sentence record: {exc}") from exc


def write_linked_sentences(handle: IO[str], linked: Iterable[LinkedSentence]) -> int:
    count = 0
    for sent in linked:
        record = {
            "doc_id": sent.doc_id,
            "sent_id": sent.sent_id,
            "text": sent.text,
            "mentions": [
                {"start": m.start, "end": m.end, "concept": m.concept} for m in sent.mentions
            ],
        }
        handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        count += 1
    return count


def read_linked_sentences(handle: IO[str], source: str = "<stream>") -> Iterator[LinkedSentence]:
    for line_no, line in enumerate(handle, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            mentions = tuple(
                MentionSpan(int(m["start"]), int(m["end"]), str(m["concept"]))
                for m in record["mentions"]
            )
            yield LinkedSentence(
                doc_id=str(record["doc_id"]),
                sent_id=int(record["sent_id"]),
                text=str(record["text"]),
                mentions=mentions,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{source}:{line_no}: bad linked-sentence record: {exc}") from exc
