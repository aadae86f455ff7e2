"""Seeded synthetic dictionaries and corpora with controllable context signal.

Every concept gets a private pool of cue words; a sentence embeds one
synonym and, with probability ``context_signal``, cue words right next to
it.  The held-out split reuses the same concepts but mentions them via
synonyms that are deliberately absent from the emitted dictionary, so a
normalizer can only solve it from context.  Output is fully deterministic
per seed and byte-identical across runs.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import GoldMention, write_gold
from .linker import RawSentence

_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
_CUES_PER_CONCEPT = 3
_SENTENCES_PER_DOC = 10


@dataclass(frozen=True)
class SynthSpec:
    n_concepts: int = 10
    synonyms_per_concept: int = 3
    sentences_per_concept: int = 10
    context_signal: float = 0.9
    vocab_size: int = 300
    seed: int = 0
    # When set, adds overlapping two-word synonyms to the dictionary so the
    # longest-match rule has something to disambiguate on dirty data.
    adversarial_overlaps: bool = False

    def __post_init__(self) -> None:
        if min(self.n_concepts, self.synonyms_per_concept, self.sentences_per_concept, self.vocab_size) < 1:
            raise ValueError("all synthesis counts must be >= 1")
        if not 0.0 <= self.context_signal <= 1.0:
            raise ValueError("context_signal must be in [0, 1]")


@dataclass
class SynthData:
    spec: SynthSpec
    dictionary_rows: list[tuple[str, str]]          # (concept, synonym)
    sentences: list[RawSentence]                    # training corpus
    gold: list[GoldMention]                         # held-out, unseen synonyms
    cue_words: dict[str, list[str]]                 # concept -> private cues
    heldout_synonyms: dict[str, str]                # concept -> unseen synonym
    manifest: dict = field(default_factory=dict)


def _fresh_word(rng: random.Random, used: set[str], lo: int, hi: int) -> str:
    while True:
        word = "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(lo, hi)))
        if word not in used:
            used.add(word)
            return word


def _fresh_synonym(rng: random.Random, used: set[str], existing: list[str]) -> str:
    while True:
        word = _fresh_word(rng, used, 6, 10)
        if all(word not in other and other not in word for other in existing):
            existing.append(word)
            return word


def generate(spec: SynthSpec) -> SynthData:
    rng = random.Random(spec.seed)
    used: set[str] = set()
    all_synonyms: list[str] = []

    concept_ids = [f"C{i + 1:04d}" for i in range(spec.n_concepts)]
    train_synonyms: dict[str, list[str]] = {}
    heldout_synonyms: dict[str, str] = {}
    cue_words: dict[str, list[str]] = {}
    for concept in concept_ids:
        train_synonyms[concept] = [
            _fresh_synonym(rng, used, all_synonyms) for _ in range(spec.synonyms_per_concept)
        ]
        heldout_synonyms[concept] = _fresh_synonym(rng, used, all_synonyms)
        cue_words[concept] = [_fresh_word(rng, used, 4, 8) for _ in range(_CUES_PER_CONCEPT)]
    background = [_fresh_word(rng, used, 4, 8) for _ in range(spec.vocab_size)]

    dictionary_rows = [
        (concept, synonym) for concept in concept_ids for synonym in train_synonyms[concept]
    ]
    if spec.adversarial_overlaps:
        for i in range(0, spec.n_concepts - 1, 2):
            a = _fresh_word(rng, used, 4, 6)
            b = _fresh_word(rng, used, 4, 6)
            c = _fresh_word(rng, used, 4, 6)
            dictionary_rows.append((concept_ids[i], f"{a} {b}"))
            dictionary_rows.append((concept_ids[i + 1], f"{b} {c}"))

    def compose(concept: str, synonym: str) -> tuple[str, int, int]:
        """Sentence text plus the character span of the embedded synonym."""
        tokens = [rng.choice(background) for _ in range(rng.randint(8, 14))]
        at = rng.randint(0, len(tokens))
        tokens.insert(at, synonym)
        if rng.random() < spec.context_signal:
            before, after = rng.sample(cue_words[concept], 2)
            tokens.insert(at, before)
            tokens.insert(at + 2, after)
            at += 1
        text = " ".join(tokens)
        start = sum(len(t) + 1 for t in tokens[:at])
        return text, start, start + len(synonym)

    sentences: list[RawSentence] = []
    per_concept_sentences: dict[str, int] = {}
    k = 0
    for concept in concept_ids:
        for _ in range(spec.sentences_per_concept):
            text, _, _ = compose(concept, rng.choice(train_synonyms[concept]))
            sentences.append(
                RawSentence(f"train-{k // _SENTENCES_PER_DOC:05d}", k % _SENTENCES_PER_DOC, text)
            )
            per_concept_sentences[concept] = per_concept_sentences.get(concept, 0) + 1
            k += 1

    gold: list[GoldMention] = []
    k = 0
    for concept in concept_ids:
        for _ in range(spec.sentences_per_concept):
            text, start, end = compose(concept, heldout_synonyms[concept])
            gold.append(
                GoldMention(
                    doc_id=f"test-{k // _SENTENCES_PER_DOC:05d}",
                    sent_id=k % _SENTENCES_PER_DOC,
                    text=text,
                    start=start,
                    end=end,
                    gold_concept=concept,
                )
            )
            k += 1

    manifest = {
        "spec": {
            "n_concepts": spec.n_concepts,
            "synonyms_per_concept": spec.synonyms_per_concept,
            "sentences_per_concept": spec.sentences_per_concept,
            "context_signal": spec.context_signal,
            "vocab_size": spec.vocab_size,
            "seed": spec.seed,
            "adversarial_overlaps": spec.adversarial_overlaps,
        },
        "concepts": spec.n_concepts,
        "dictionary_synonyms": len(dictionary_rows),
        "heldout_synonyms_per_concept": 1,
        "train_sentences": len(sentences),
        "train_mentions": len(sentences),  # exactly one embedded mention each
        "sentences_per_concept": per_concept_sentences,
        "gold_mentions": len(gold),
        "files": {
            "dictionary": "dict.tsv",
            "corpus": "corpus.jsonl",
            "gold": "gold.jsonl",
        },
    }
    return SynthData(
        spec=spec,
        dictionary_rows=dictionary_rows,
        sentences=sentences,
        gold=gold,
        cue_words=cue_words,
        heldout_synonyms=heldout_synonyms,
        manifest=manifest,
    )


def write_synth(data: SynthData, out_dir: str | Path) -> dict[str, Path]:
    """Write dict.tsv, corpus.jsonl, gold.jsonl, and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "dictionary": out / "dict.tsv",
        "corpus": out / "corpus.jsonl",
        "gold": out / "gold.jsonl",
        "manifest": out / "manifest.json",
    }
    with paths["dictionary"].open("w", encoding="utf-8") as handle:
        for concept, synonym in data.dictionary_rows:
            handle.write(f"{concept}\t{synonym}\n")
    with paths["corpus"].open("w", encoding="utf-8") as handle:
        for sentence in data.sentences:
            record = {"doc_id": sentence.doc_id, "sent_id": sentence.sent_id, "text": sentence.text}
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    with paths["gold"].open("w", encoding="utf-8") as handle:
        write_gold(handle, data.gold)
    with paths["manifest"].open("w", encoding="utf-8") as handle:
        json.dump(data.manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return paths
