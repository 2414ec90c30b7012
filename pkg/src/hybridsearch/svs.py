"""Sparse-vector retrieval: inner product with block-max pruning.

Blocks are fixed-size document-ordinal ranges.  Per term, each block
stores the maximum impact weight; a query's upper bound for a block is
the inner product of query weights with those maxima.  Blocks are
visited in descending bound order and fully scored through the forward
store only while the bound can still reach the current top-k.

Exactness relies on two accumulation rules shared by the bound and the
scorer: terms are added in ascending term-id order, and summation is
sequential in float64.  Dropping a term (absent from a document) or
replacing a weight by its block maximum can then never decrease the
float sum, so bounds dominate true scores bit-for-bit.  A block is
scored when its bound equals the threshold, not only when it exceeds
it: visit order is not ordinal order, so an equal-scored document with
a smaller ordinal may still be waiting in an unvisited block.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass

import numpy as np

from .base import SearchEstimator
from .errors import FileFormatError, IndexCorpusMismatchError
from .io import _check_header, _read_exact
from .types import PathTag, RankedList, ScoredHit, SparseVector
from .validation import check_fitted, check_top_k

SVS_MAGIC = b"HSSI"
SVS_VERSION = 1
DEFAULT_BLOCK_SIZE = 8
ZERO_FINGERPRINT = b"\x00" * 16


def sparse_dot(q: SparseVector, d: SparseVector) -> float:
    """Inner product over shared term ids, merged in ascending id order."""
    qi, di = q.term_ids, d.term_ids
    qw, dw = q.weights, d.weights
    i = j = 0
    total = 0.0
    while i < qi.size and j < di.size:
        a, b = qi[i], di[j]
        if a == b:
            total += float(qw[i]) * float(dw[j])
            i += 1
            j += 1
        elif a < b:
            i += 1
        else:
            j += 1
    return total


@dataclass
class _ImpactList:
    docs: np.ndarray      # u32, ascending
    weights: np.ndarray   # f32, > 0
    block_ids: np.ndarray  # u32, ascending; blocks where the term occurs
    block_max: np.ndarray  # f64, per entry of block_ids


@dataclass
class SvsIndex:
    terms: dict[int, _ImpactList]
    forward: list[SparseVector]
    block_size: int
    fingerprint: bytes = ZERO_FINGERPRINT

    @property
    def doc_count(self) -> int:
        return len(self.forward)

    @property
    def n_blocks(self) -> int:
        return -(-len(self.forward) // self.block_size)


@dataclass
class SvsStats:
    """Pruning instrumentation: how many blocks were fully scored."""

    blocks_total: int = 0
    blocks_bounded: int = 0
    blocks_scored: int = 0
    docs_scored: int = 0

    def scored_fraction(self) -> float:
        if self.blocks_total == 0:
            return 0.0
        return self.blocks_scored / self.blocks_total


def build_svs_index(vectors, block_size=DEFAULT_BLOCK_SIZE,
                    fingerprint=ZERO_FINGERPRINT) -> SvsIndex:
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    vectors = list(vectors)
    term_docs: dict[int, list] = {}
    term_weights: dict[int, list] = {}
    for doc, vec in enumerate(vectors):
        if not isinstance(vec, SparseVector):
            raise TypeError(f"record {doc} is not a SparseVector")
        for tid, w in zip(vec.term_ids, vec.weights):
            term_docs.setdefault(int(tid), []).append(doc)
            term_weights.setdefault(int(tid), []).append(w)

    terms = {}
    for tid in sorted(term_docs):
        docs = np.asarray(term_docs[tid], dtype=np.uint32)
        weights = np.asarray(term_weights[tid], dtype=np.float32)
        blocks = docs // block_size
        block_ids, starts = np.unique(blocks, return_index=True)
        block_max = np.empty(block_ids.size, dtype=np.float64)
        bounds = list(starts) + [docs.size]
        for i in range(block_ids.size):
            block_max[i] = weights[bounds[i]:bounds[i + 1]].astype(np.float64).max()
        terms[tid] = _ImpactList(docs, weights, block_ids.astype(np.uint32),
                                 block_max)
    return SvsIndex(terms, vectors, block_size, fingerprint)


def exhaustive_svs_topk(index, q, k) -> RankedList:
    """Brute-force oracle: inner product against every forward vector."""
    k = check_top_k(k)
    hits = []
    for doc, vec in enumerate(index.forward):
        s = sparse_dot(q, vec)
        if s > 0.0:
            hits.append((s, -doc))
    hits.sort(key=lambda e: (-e[0], -e[1]))
    return RankedList(
        PathTag.SVS, tuple(ScoredHit(-neg, s) for s, neg in hits[:k])
    )


def svs_topk(index, q, k, alpha=1.0, stats=None) -> RankedList:
    """Block-max pruned top-k; exact at alpha=1, approximate above."""
    k = check_top_k(k)
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    n_blocks = index.n_blocks
    if stats is not None:
        stats.blocks_total += n_blocks
    if n_blocks == 0 or q.nnz == 0:
        return RankedList(PathTag.SVS, ())

    # per-block upper bounds, accumulated in ascending term-id order
    bounds = np.zeros(n_blocks, dtype=np.float64)
    seen_any = False
    for i in range(q.nnz):
        tid = int(q.term_ids[i])
        impact = index.terms.get(tid)
        if impact is None:
            continue
        seen_any = True
        bounds[impact.block_ids] += float(q.weights[i]) * impact.block_max
    if not seen_any:
        return RankedList(PathTag.SVS, ())

    candidates = np.nonzero(bounds > 0.0)[0]
    if stats is not None:
        stats.blocks_bounded += int(candidates.size)
    order = candidates[np.lexsort((candidates, -bounds[candidates]))]

    heap: list[tuple[float, int]] = []  # (score, -doc)
    bs = index.block_size
    n_docs = index.doc_count
    for blk in order:
        theta = heap[0][0] if len(heap) == k else 0.0
        if len(heap) == k and bounds[blk] < alpha * theta:
            break  # bounds descend; nothing later can reach the top-k
        if stats is not None:
            stats.blocks_scored += 1
        lo = int(blk) * bs
        hi = min(lo + bs, n_docs)
        for doc in range(lo, hi):
            s = sparse_dot(q, index.forward[doc])
            if stats is not None:
                stats.docs_scored += 1
            if s <= 0.0:
                continue
            entry = (s, -doc)
            if len(heap) < k:
                heapq.heappush(heap, entry)
            elif entry > heap[0]:
                heapq.heapreplace(heap, entry)

    ordered = sorted(heap, key=lambda e: (-e[0], -e[1]))
    return RankedList(
        PathTag.SVS, tuple(ScoredHit(-neg, s) for s, neg in ordered)
    )


# ---------------------------------------------------------------------------
# Serialization (.svsidx): forward store only; inverted side is rebuilt

def save_svs_index(index: SvsIndex, path):
    with open(path, "wb") as fh:
        fh.write(SVS_MAGIC)
        fh.write(struct.pack("<I", SVS_VERSION))
        fh.write(index.fingerprint)
        fh.write(struct.pack("<IQ", index.block_size, index.doc_count))
        for vec in index.forward:
            fh.write(struct.pack("<I", vec.nnz))
            pairs = np.empty(vec.nnz, dtype=[("id", "<u4"), ("w", "<f4")])
            pairs["id"] = vec.term_ids
            pairs["w"] = vec.weights
            fh.write(pairs.tobytes())


def load_svs_index(path, manifest=None) -> SvsIndex:
    with open(path, "rb") as fh:
        _check_header(fh, path, SVS_MAGIC)
        fingerprint = _read_exact(fh, 16, path, "fingerprint")
        if manifest is not None and fingerprint != manifest.fingerprint():
            raise IndexCorpusMismatchError(
                f"{path}: index was built from a different corpus"
            )
        block_size, doc_count = struct.unpack(
            "<IQ", _read_exact(fh, 12, path, "header")
        )
        vectors = []
        for rec in range(doc_count):
            (nnz,) = struct.unpack("<I", _read_exact(fh, 4, path, f"record {rec}"))
            raw = _read_exact(fh, nnz * 8, path, f"record {rec} entries")
            pairs = np.frombuffer(raw, dtype=[("id", "<u4"), ("w", "<f4")])
            vec = SparseVector(
                pairs["id"].astype(np.uint32), pairs["w"].astype(np.float32)
            )
            if vec.nnz != nnz:
                raise FileFormatError(
                    f"{path}: record {rec} has non-positive weights"
                )
            vectors.append(vec)
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after payload")
    index = build_svs_index(vectors, block_size, fingerprint)
    return index


# ---------------------------------------------------------------------------
# Estimator wrapper

class SparseVectorSearch(SearchEstimator):
    """Sparse inner-product retrieval with the fit/search interface."""

    def __init__(self, block_size=DEFAULT_BLOCK_SIZE, alpha=1.0):
        self.block_size = block_size
        self.alpha = alpha

    def fit(self, vectors, fingerprint=ZERO_FINGERPRINT):
        self.index_ = build_svs_index(vectors, self.block_size, fingerprint)
        return self

    def search(self, q: SparseVector, k=10, stats=None) -> RankedList:
        check_fitted(self, "index_")
        return svs_topk(self.index_, q, k, alpha=self.alpha, stats=stats)

    def save(self, path):
        check_fitted(self, "index_")
        save_svs_index(self.index_, path)

    @classmethod
    def load(cls, path, manifest=None) -> "SparseVectorSearch":
        index = load_svs_index(path, manifest)
        est = cls(index.block_size)
        est.index_ = index
        return est
