"""Exception hierarchy shared across the package."""
from __future__ import annotations


class CtxnormError(Exception):
    """Base class for all errors raised by this package."""


class DictionaryError(CtxnormError):
    """Problems loading or validating a synonym dictionary."""


class DictionaryParseError(DictionaryError):
    """A dictionary file line could not be parsed."""

    def __init__(self, path: str, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class AmbiguousSynonymError(DictionaryError):
    """The same normalized synonym maps to two different concepts."""

    def __init__(self, synonym: str, first: str, second: str) -> None:
        super().__init__(
            f"synonym {synonym!r} maps to both {first!r} and {second!r}"
        )
        self.synonym = synonym
        self.concepts = (first, second)


class CorpusError(CtxnormError):
    """Malformed corpus input; carries the document/sentence position."""


class TrainingError(CtxnormError):
    """Training could not proceed (empty pool, non-finite loss, ...)."""


class NeighborIndexError(CtxnormError):
    """Problems building, loading, or querying a neighbor index."""


class FingerprintMismatchError(NeighborIndexError):
    """The index was built with a different encoder than the one supplied."""
