"""Embedding contract and an exact top-k cosine index.

Corpora here are tiny (tens of guide paragraphs, ~30 products), so the index
is a brute-force scan: exact, testable, and free at this scale. The default
test provider is a seeded feature-hashing embedder that needs no network.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import DuplicateId, EmptyIndex, EmptyText

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    dim: int

    def __post_init__(self) -> None:
        if len(self.values) != self.dim:
            raise ValueError("vector length does not match dim")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("vector entries must be finite")


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, text: str) -> EmbeddingVector: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class HashingEmbedder:
    """Deterministic bag-of-tokens feature hashing, L2-normalized.

    Tokens are hashed into ``dim`` buckets with a seeded blake2b digest, so
    output depends only on (seed, text) — never on process state. Texts with
    no alphanumeric tokens map to the zero vector.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self._key = seed.to_bytes(8, "little", signed=False)

    def _bucket(self, token: str) -> int:
        import hashlib

        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                                 key=self._key).digest()
        return int.from_bytes(digest, "big") % self.dim

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        counts = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            counts[self._bucket(token)] += 1.0
        norm = float(np.linalg.norm(counts))
        if norm > 0:
            counts /= norm
        return EmbeddingVector(values=counts, dim=self.dim)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1]; identical vectors score exactly 1.0."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    if np.array_equal(a.values, b.values):
        if float(np.linalg.norm(a.values)) == 0.0:
            return 0.0
        return 1.0
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        return 0.0
    score = float(np.dot(a.values, b.values)) / (na * nb)
    return max(-1.0, min(1.0, score))


@dataclass(frozen=True, eq=False)
class IndexEntry:
    entry_id: str
    vector: EmbeddingVector
    payload: str


@dataclass(frozen=True, eq=False)
class VectorIndex:
    dim: int
    entries: tuple[IndexEntry, ...]

    def get(self, entry_id: str) -> IndexEntry:
        for entry in self.entries:
            if entry.entry_id == entry_id:
                return entry
        raise KeyError(entry_id)


def build_index(items: Sequence[tuple[str, str]],
                provider: EmbeddingProvider) -> VectorIndex:
    if not items:
        raise EmptyIndex("cannot build an index from no items")
    seen: set[str] = set()
    entries = []
    for entry_id, text in items:
        if entry_id in seen:
            raise DuplicateId(f"duplicate entry id {entry_id!r}")
        seen.add(entry_id)
        entries.append(IndexEntry(entry_id, provider.embed(text), text))
    return VectorIndex(dim=provider.dim, entries=tuple(entries))


# Scores are ranked at this precision so that mathematically equal
# similarities tie (and fall back to the id tie-break) even when different
# accumulation orders disagree in the last float ulp.
RANK_DECIMALS = 12


def search(index: VectorIndex, query: str, k: int,
           provider: EmbeddingProvider) -> list[tuple[str, float]]:
    """Top min(k, n) entries by descending cosine, ties by ascending id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.entries:
        raise EmptyIndex("search over an empty index")
    query_vec = provider.embed(query)
    scored = [(cosine(entry.vector, query_vec), entry.entry_id)
              for entry in index.entries]
    scored.sort(key=lambda pair: (-round(pair[0], RANK_DECIMALS), pair[1]))
    return [(entry_id, score) for score, entry_id in scored[:k]]


# -- cache round-trip ---------------------------------------------------------

def index_to_json(index: VectorIndex) -> str:
    return json.dumps({
        "dim": index.dim,
        "entries": [{"id": e.entry_id,
                     "vector": [float(v) for v in e.vector.values],
                     "payload": e.payload}
                    for e in index.entries],
    })


def index_from_json(text: str) -> VectorIndex:
    data = json.loads(text)
    dim = int(data["dim"])
    seen: set[str] = set()
    entries = []
    for item in data["entries"]:
        if item["id"] in seen:
            raise DuplicateId(f"duplicate entry id {item['id']!r}")
        seen.add(item["id"])
        vec = EmbeddingVector(np.asarray(item["vector"], dtype=np.float64), dim)
        entries.append(IndexEntry(item["id"], vec, item["payload"]))
    return VectorIndex(dim=dim, entries=tuple(entries))


def save_index(index: VectorIndex, path: str | Path) -> None:
    Path(path).write_text(index_to_json(index), encoding="utf-8")


def load_index(path: str | Path) -> VectorIndex:
    return index_from_json(Path(path).read_text(encoding="utf-8"))
