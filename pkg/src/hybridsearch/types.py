"""Shared domain types: manifests, vectors and ranked candidate lists.

Document identity is a dense unsigned ordinal assigned in corpus ingestion
order.  All scoring paths and fusion operators exchange ``RankedList``
values whose ordering contract (score descending, ordinal ascending on
ties) is the global tie-break used everywhere in the package.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MAX_ORDINAL = 2**32 - 1


class PathTag(str, Enum):
    """Which retrieval path produced a ranked list."""

    FTS = "FTS"
    SVS = "SVS"
    DVS = "DVS"
    TENS = "TENS"
    FUSED = "FUSED"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            return cls.__members__.get(value.upper())
        return None

    @property
    def short(self) -> str:
        """Lowercase name used in config files and reports."""
        return self.name.lower()

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ScoredHit:
    """One scored candidate document."""

    doc: int
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite score for doc {self.doc}: {self.score}")


@dataclass(frozen=True)
class RankedList:
    """Ordered scored candidates from one retrieval path or a fusion step.

    Hits are sorted by score descending; equal scores break ties by
    ascending doc ordinal.  Ranks are 1-based.
    """

    path_tag: PathTag
    hits: tuple[ScoredHit, ...]

    def __post_init__(self):
        object.__setattr__(self, "hits", tuple(self.hits))
        seen = set()
        for i, hit in enumerate(self.hits):
            if hit.doc in seen:
                raise ValueError(f"duplicate doc ordinal {hit.doc} in ranked list")
            seen.add(hit.doc)
            if i > 0:
                prev = self.hits[i - 1]
                ok = prev.score > hit.score or (
                    prev.score == hit.score and prev.doc < hit.doc
                )
                if not ok:
                    raise ValueError(
                        f"ranked list not totally ordered at position {i}: "
                        f"({prev.doc}, {prev.score}) then ({hit.doc}, {hit.score})"
                    )

    def __len__(self):
        return len(self.hits)

    def docs(self) -> list[int]:
        return [h.doc for h in self.hits]

    def scores(self) -> list[float]:
        return [h.score for h in self.hits]

    def ranks(self) -> dict[int, int]:
        """Map doc ordinal to its 1-based rank."""
        return {h.doc: i + 1 for i, h in enumerate(self.hits)}

    def truncated(self, k: int) -> "RankedList":
        if k >= len(self.hits):
            return self
        return RankedList(self.path_tag, self.hits[:k])

    def digest(self) -> str:
        """Content hash over (doc, score) pairs; equal iff byte-identical."""
        h = hashlib.sha256()
        for hit in self.hits:
            h.update(np.uint32(hit.doc).tobytes())
            h.update(np.float64(hit.score).tobytes())
        return h.hexdigest()


def ranked_list_from_arrays(path_tag, docs, scores, k, positive_only=False):
    """Canonical top-k with the global tie-break (score desc, doc asc).

    `docs`/`scores` are parallel arrays of candidates.  With
    `positive_only`, zero and negative scores are dropped before ranking
    (lexical paths return matching documents only, never padding).
    """
    docs = np.asarray(docs, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if positive_only:
        keep = scores > 0.0
        docs, scores = docs[keep], scores[keep]
    if k <= 0 or docs.size == 0:
        return RankedList(path_tag, ())
    order = np.lexsort((docs, -scores))[:k]
    hits = tuple(ScoredHit(int(docs[i]), float(scores[i])) for i in order)
    return RankedList(path_tag, hits)


@dataclass(frozen=True)
class CorpusManifest:
    """Maps external document ids to dense ordinals and holds the
    collection statistics used by BM25 length normalization."""

    external_ids: tuple[str, ...]
    doc_lens: tuple[int, ...] | None = None
    avg_doc_len: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "external_ids", tuple(self.external_ids))
        if len(self.external_ids) > MAX_ORDINAL + 1:
            raise ValueError("corpus exceeds the 32-bit ordinal space")
        if len(set(self.external_ids)) != len(self.external_ids):
            raise ValueError("external ids are not unique")
        if self.doc_lens is None:
            # Reconstructed from an id sidecar: lengths live in the index
            # payloads, not here.
            if self.avg_doc_len is not None:
                raise ValueError("avg_doc_len requires doc_lens")
            return
        object.__setattr__(self, "doc_lens", tuple(int(x) for x in self.doc_lens))
        if len(self.external_ids) != len(self.doc_lens):
            raise ValueError("external_ids and doc_lens must have equal length")
        mean = float(np.mean(self.doc_lens)) if self.doc_lens else 0.0
        if self.avg_doc_len is None:
            object.__setattr__(self, "avg_doc_len", mean)
        elif self.doc_lens and abs(self.avg_doc_len - mean) > 1e-9 * max(1.0, mean):
            raise ValueError(
                f"avg_doc_len {self.avg_doc_len} inconsistent with mean {mean}"
            )

    @classmethod
    def from_ids(cls, external_ids) -> "CorpusManifest":
        """Manifest rebuilt from an id sidecar; only the id sequence (and
        hence the fingerprint) is known."""
        return cls(tuple(external_ids))

    @property
    def doc_count(self) -> int:
        return len(self.external_ids)

    def fingerprint(self) -> bytes:
        """16-byte digest over the id sequence; stored in index headers so
        loading can detect index/corpus mismatches."""
        h = hashlib.sha256()
        h.update(str(self.doc_count).encode())
        for ext_id in self.external_ids:
            h.update(b"\x00")
            h.update(ext_id.encode("utf-8"))
        return h.digest()[:16]

    def ordinal_index(self) -> dict[str, int]:
        return {ext: i for i, ext in enumerate(self.external_ids)}


class SparseVector:
    """Sparse term-weight vector: strictly ascending u32 term ids with
    positive float32 weights (zero entries are dropped at construction)."""

    __slots__ = ("term_ids", "weights")

    def __init__(self, term_ids, weights, validate=True):
        term_ids = np.asarray(term_ids, dtype=np.uint32)
        weights = np.asarray(weights, dtype=np.float32)
        if validate:
            if term_ids.ndim != 1 or weights.ndim != 1 or term_ids.size != weights.size:
                raise ValueError("term_ids and weights must be parallel 1-d arrays")
            if not np.all(np.isfinite(weights)):
                raise ValueError("sparse weights must be finite")
            keep = weights > 0
            term_ids, weights = term_ids[keep], weights[keep]
            if term_ids.size > 1 and not np.all(np.diff(term_ids.astype(np.int64)) > 0):
                raise ValueError("term_ids must be strictly ascending")
        self.term_ids = term_ids
        self.weights = weights
        self.term_ids.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def from_dict(cls, entries: dict[int, float]) -> "SparseVector":
        ids = sorted(entries)
        return cls(ids, [entries[i] for i in ids])

    @property
    def nnz(self) -> int:
        return int(self.term_ids.size)

    def __eq__(self, other):
        return (
            isinstance(other, SparseVector)
            and np.array_equal(self.term_ids, other.term_ids)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self):
        return f"SparseVector(nnz={self.nnz})"
