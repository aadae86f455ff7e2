"""Text normalization used for dictionary matching.

Matching happens in a normalized space (by default: Unicode case folding
plus whitespace-run collapsing) while emitted spans must index the
original text.  ``normalize_with_offsets`` therefore returns, next to the
normalized string, a per-character map back to original offsets.  Case
folding may expand a character ('ß' -> 'ss'), so several normalized
characters can share one original character; the matcher rejects spans
that would cut such an expansion in half.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NormalizationPolicy:
    """Casing/boundary rules applied to synonyms and to matched text."""

    case_fold: bool = True
    collapse_whitespace: bool = True

    def normalize(self, text: str) -> str:
        """Normalize a free-standing string (synonym or mention surface)."""
        if self.case_fold:
            text = text.casefold()
        if self.collapse_whitespace:
            text = " ".join(text.split())
        else:
            text = text.strip()
        return text


DEFAULT_POLICY = NormalizationPolicy()


@dataclass(frozen=True)
class NormalizedText:
    """A normalized string plus its character-level offset map.

    ``starts[i]``/``ends[i]`` give the original [start, end) range of the
    original character that produced normalized character ``i``.  The map
    is monotone, so non-overlapping normalized spans map to
    non-overlapping original spans.
    """

    text: str
    starts: tuple[int, ...]
    ends: tuple[int, ...]

    def to_original(self, start: int, end: int) -> tuple[int, int]:
        """Map a normalized [start, end) span back to original offsets."""
        if not 0 <= start < end <= len(self.text):
            raise ValueError(f"span [{start}, {end}) out of range")
        return self.starts[start], self.ends[end - 1]

    def cuts_expansion(self, start: int, end: int) -> bool:
        """True if the span begins or ends inside a case-fold expansion."""
        if start > 0 and self.starts[start] == self.starts[start - 1]:
            return True
        if end < len(self.text) and self.starts[end] == self.starts[end - 1]:
            return True
        return False


def normalize_with_offsets(text: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> NormalizedText:
    """Normalize ``text`` keeping a map from normalized to original offsets.

    Whitespace runs collapse to a single space mapped to the run's first
    character; leading/trailing whitespace produces no output at all.
    """
    chars: list[str] = []
    starts: list[int] = []
    ends: list[int] = []
    pending_space_at = -1  # original index of a collapsed whitespace run
    for i, ch in enumerate(text):
        if policy.collapse_whitespace and ch.isspace():
            if pending_space_at < 0:
                pending_space_at = i
            continue
        if pending_space_at >= 0:
            if chars:  # drop leading whitespace entirely
                chars.append(" ")
                starts.append(pending_space_at)
                ends.append(pending_space_at + 1)
            pending_space_at = -1
        folded = ch.casefold() if policy.case_fold else ch
        for out in folded:
            chars.append(out)
            starts.append(i)
            ends.append(i + 1)
    # trailing whitespace (pending_space_at >= 0) is intentionally dropped
    return NormalizedText("".join(chars), tuple(starts), tuple(ends))
