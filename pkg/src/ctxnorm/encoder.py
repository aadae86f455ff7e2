"""Contextual mention encoder.

A mention is identified to the encoder by an explicit token range inside
its sentence (equivalent in role to wrapping the mention in marker
tokens; ``insert_mention_markers`` adapts inputs for encoders that expect
markers).  The reference encoder is deliberately simple and fully
trainable at desk scale: hashed sparse features (character 3-5-grams of
the mention surface, plus lowercased word unigrams from a context window)
pushed through a trainable linear projection and L2-normalized.

Embeddings are always unit-norm.  If an input produces no features at
all, ``encode`` returns a fixed unit vector and flags the fallback rather
than failing.
"""
from __future__ import annotations

import hashlib
import io
import json
import re
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib import format as _npy_format

from .errors import CtxnormError

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_MODEL_FORMAT = 1
# zip timestamps are pinned so identical params produce identical files
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class MentionInput:
    """Sentence tokens plus the [start, end) token range of the mention."""

    tokens: tuple[str, ...]
    mention_start: int
    mention_end: int

    def __post_init__(self) -> None:
        if not 0 <= self.mention_start < self.mention_end <= len(self.tokens):
            raise ValueError(
                f"mention range [{self.mention_start}, {self.mention_end}) "
                f"invalid for {len(self.tokens)} tokens"
            )

    @property
    def surface(self) -> str:
        return " ".join(self.tokens[self.mention_start : self.mention_end])


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Split into word/punctuation tokens with character spans."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def mention_input_from_span(text: str, start: int, end: int) -> MentionInput:
    """Build a MentionInput from a character span inside ``text``.

    The mention range covers every token overlapping [start, end).
    """
    spans = tokenize_with_spans(text)
    tokens = tuple(tok for tok, _, _ in spans)
    covered = [i for i, (_, ts, te) in enumerate(spans) if ts < end and te > start]
    if not covered:
        raise ValueError(f"span [{start}, {end}) covers no token in {text!r}")
    return MentionInput(tokens, covered[0], covered[-1] + 1)


def insert_mention_markers(
    inp: MentionInput, open_marker: str = "[ENT]", close_marker: str = "[/ENT]"
) -> list[str]:
    """Adapter for marker-based encoders: wrap the mention range in markers."""
    tokens = list(inp.tokens)
    return (
        tokens[: inp.mention_start]
        + [open_marker]
        + tokens[inp.mention_start : inp.mention_end]
        + [close_marker]
        + tokens[inp.mention_end :]
    )


@dataclass(frozen=True)
class SparseFeatures:
    """Sorted sparse feature vector over a hashed feature space of ``size``."""

    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray   # float64 occurrence counts
    size: int


def _hash_token(token: str, seed: int) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def featurize(inp: MentionInput, window: int, size: int, hash_seed: int = 0) -> SparseFeatures:
    """Hash mention-surface character 3-5-grams and windowed context unigrams.

    The two feature families live in disjoint id ranges ([0, size//2) for
    surface n-grams, [size//2, size) for context words); values are
    occurrence counts.  Deterministic for fixed (input, window, size, seed).
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    if size < 2:
        raise ValueError("feature space must have size >= 2")
    surface_space = size // 2
    context_space = size - surface_space
    counts: dict[int, float] = {}

    surface = inp.surface.casefold()
    for n in (3, 4, 5):
        for i in range(len(surface) - n + 1):
            fid = _hash_token(surface[i : i + n], hash_seed) % surface_space
            counts[fid] = counts.get(fid, 0.0) + 1.0

    left = inp.tokens[max(0, inp.mention_start - window) : inp.mention_start]
    right = inp.tokens[inp.mention_end : inp.mention_end + window]
    for token in (*left, *right):
        if not any(ch.isalnum() for ch in token):
            continue  # punctuation carries no context signal
        fid = surface_space + _hash_token(token.casefold(), hash_seed) % context_space
        counts[fid] = counts.get(fid, 0.0) + 1.0

    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    return SparseFeatures(indices=indices, values=values, size=size)


@dataclass
class EncoderParams:
    """Trainable encoder state: projection matrix plus featurization metadata."""

    projection: np.ndarray  # (feature_space, dim) float64
    window: int
    hash_seed: int

    @property
    def feature_space(self) -> int:
        return self.projection.shape[0]

    @property
    def dim(self) -> int:
        return self.projection.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.projection.copy(), self.window, self.hash_seed)


def init_params(
    feature_space: int = 2**18,
    dim: int = 256,
    window: int = 10,
    seed: int = 0,
    hash_seed: int = 0,
) -> EncoderParams:
    """Seeded uniform init in [-1/sqrt(F), 1/sqrt(F)]."""
    if dim < 2:
        raise ValueError("embedding dimension must be >= 2")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(feature_space)
    projection = rng.uniform(-scale, scale, size=(feature_space, dim))
    return EncoderParams(projection=projection, window=window, hash_seed=hash_seed)


def _fallback_vector(dim: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    vec[0] = 1.0
    return vec


def project(params: EncoderParams, features: SparseFeatures) -> np.ndarray:
    """Pre-normalization embedding: projection^T applied to sparse features."""
    if features.size != params.feature_space:
        raise CtxnormError(
            f"feature space mismatch: features built for {features.size}, "
            f"params have {params.feature_space}"
        )
    if len(features.indices) == 0:
        return np.zeros(params.dim, dtype=np.float64)
    return features.values @ params.projection[features.indices]


def encode_features(params: EncoderParams, features: SparseFeatures) -> tuple[np.ndarray, bool]:
    """Unit-norm embedding for precomputed features; flags the zero-vector fallback."""
    vec = project(params, features)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return _fallback_vector(params.dim), True
    return vec / norm, False


def encode_flagged(params: EncoderParams, inp: MentionInput) -> tuple[np.ndarray, bool]:
    return encode_features(params, featurize(inp, params.window, params.feature_space, params.hash_seed))


def encode(params: EncoderParams, inp: MentionInput) -> np.ndarray:
    """Unit-norm contextual embedding of one marked mention."""
    return encode_flagged(params, inp)[0]


def encode_batch(params: EncoderParams, inputs: list[MentionInput]) -> np.ndarray:
    """Elementwise, order-preserving encode; returns an (n, dim) array."""
    if not inputs:
        return np.zeros((0, params.dim), dtype=np.float64)
    return np.stack([encode(params, inp) for inp in inputs])


def projection_gradient(
    params: EncoderParams, inp: MentionInput, upstream: np.ndarray
) -> np.ndarray:
    """Gradient of <upstream, encode(params, inp)> with respect to the projection.

    Chains through the L2 normalization; the zero-feature fallback is a
    constant, so its gradient is zero.  Returned dense (F, dim) array is
    meant for small feature spaces (contract verification); training uses
    the sparse accumulation in the trainer instead.
    """
    grad = np.zeros_like(params.projection)
    features = featurize(inp, params.window, params.feature_space, params.hash_seed)
    vec = project(params, features)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return grad
    unit = vec / norm
    dvec = (upstream - unit * float(unit @ upstream)) / norm
    grad[features.indices] = np.outer(features.values, dvec)
    return grad


def fingerprint(params: EncoderParams) -> str:
    """Stable content hash used to pair indexes with the encoder that built them."""
    h = hashlib.blake2b(digest_size=16)
    header = f"{_MODEL_FORMAT}|{params.feature_space}|{params.dim}|{params.window}|{params.hash_seed}|"
    h.update(header.encode("ascii"))
    h.update(np.ascontiguousarray(params.projection, dtype=np.float64).tobytes())
    return h.hexdigest()


def save_params(params: EncoderParams, path: str | Path) -> None:
    """Write the model container (bit-exact, byte-identical for equal params)."""
    meta = {
        "format": _MODEL_FORMAT,
        "feature_space": params.feature_space,
        "dim": params.dim,
        "window": params.window,
        "hash_seed": params.hash_seed,
    }
    buf = io.BytesIO()
    _npy_format.write_array(
        buf, np.ascontiguousarray(params.projection, dtype=np.float64), version=(1, 0)
    )
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as archive:
        archive.writestr(zipfile.ZipInfo("meta.json", date_time=_EPOCH), json.dumps(meta, sort_keys=True))
        archive.writestr(zipfile.ZipInfo("projection.npy", date_time=_EPOCH), buf.getvalue())


def load_params(path: str | Path) -> EncoderParams:
    try:
        with zipfile.ZipFile(path, "r") as archive:
            meta = json.loads(archive.read("meta.json"))
            if meta.get("format") != _MODEL_FORMAT:
                raise CtxnormError(f"unsupported model format: {meta.get('format')!r}")
            with archive.open("projection.npy") as handle:
                projection = _npy_format.read_array(handle)
    except (KeyError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise CtxnormError(f"cannot read model file {path}: {exc}") from exc
    if projection.shape != (meta["feature_space"], meta["dim"]):
        raise CtxnormError(
            f"model file {path} is inconsistent: projection shape {projection.shape} "
            f"!= ({meta['feature_space']}, {meta['dim']})"
        )
    return EncoderParams(
        projection=projection, window=int(meta["window"]), hash_seed=int(meta["hash_seed"])
    )
