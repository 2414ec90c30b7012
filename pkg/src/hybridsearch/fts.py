"""Full-text retrieval: BM25 over an inverted index with block-max pruning.

The pruned top-k is exact.  Per-posting BM25 contributions are computed
once at build time in float64; both the pruned search and the exhaustive
oracle read the same values and accumulate them per document in ascending
unique-term order, so agreement holds to the last bit and ties resolve
identically.  Pruning only skips a document when the block-level upper
bound fails to strictly beat the current threshold; a later document can
never displace an equal-scored earlier one under the ordinal tie-break,
so that skip is safe.

Each occurrence of a term in the query contributes one copy of the
term's score (query-side frequency acts as an integer weight).
"""

from __future__ import annotations

import heapq
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .base import SearchEstimator
from .errors import FileFormatError, IndexCorpusMismatchError
from .io import Corpus, _check_header, _read_exact, load_corpus
from .text import TokenizerConfig, tokenize
from .types import (
    CorpusManifest,
    PathTag,
    RankedList,
    ScoredHit,
    ranked_list_from_arrays,
)
from .validation import check_fitted, check_top_k

FTS_MAGIC = b"HSFT"
FTS_VERSION = 1
DEFAULT_BLOCK_SIZE = 64


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


class PostingList:
    """One term's postings plus block-max metadata.

    `contribs[i]` is the full BM25 contribution of this term for
    `docs[i]` under the collection statistics fixed at build time.
    Blocks cover `block_size` consecutive postings.
    """

    __slots__ = ("term", "idf", "docs", "tfs", "contribs", "block_size",
                 "block_last", "block_max")

    def __init__(self, term, idf, docs, tfs, contribs, block_size):
        self.term = term
        self.idf = float(idf)
        self.docs = np.ascontiguousarray(docs, dtype=np.uint32)
        self.tfs = np.ascontiguousarray(tfs, dtype=np.uint32)
        self.contribs = np.ascontiguousarray(contribs, dtype=np.float64)
        self.block_size = int(block_size)
        n = self.docs.size
        n_blocks = (n + self.block_size - 1) // self.block_size
        self.block_last = np.empty(n_blocks, dtype=np.int64)
        self.block_max = np.empty(n_blocks, dtype=np.float64)
        for blk in range(n_blocks):
            lo = blk * self.block_size
            hi = min(lo + self.block_size, n)
            self.block_last[blk] = self.docs[hi - 1]
            self.block_max[blk] = self.contribs[lo:hi].max()

    @property
    def doc_freq(self) -> int:
        return int(self.docs.size)

    def tf(self, doc) -> int:
        i = np.searchsorted(self.docs, doc)
        if i < self.docs.size and self.docs[i] == doc:
            return int(self.tfs[i])
        return 0


@dataclass
class FtsIndex:
    terms: dict[str, PostingList]
    manifest: CorpusManifest
    params: Bm25Params
    block_size: int

    @property
    def doc_count(self) -> int:
        return self.manifest.doc_count


@dataclass
class SearchStats:
    """Instrumentation for pruning effectiveness measurements."""

    postings_scored: int = 0
    postings_total: int = 0
    blocks_skipped: int = 0

    def scored_fraction(self) -> float:
        if self.postings_total == 0:
            return 0.0
        return self.postings_scored / self.postings_total


def _idf(doc_count, doc_freq):
    return float(np.log1p((doc_count - doc_freq + 0.5) / (doc_freq + 0.5)))


def build_fts_index_from_corpus(corpus: Corpus, params=Bm25Params(),
                                block_size=DEFAULT_BLOCK_SIZE,
                                tokenizer_config=TokenizerConfig()) -> FtsIndex:
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    manifest = corpus.manifest
    term_docs: dict[str, list] = {}
    term_tfs: dict[str, list] = {}
    for doc, text in enumerate(corpus.texts):
        for term, tf in sorted(Counter(tokenize(text, tokenizer_config)).items()):
            term_docs.setdefault(term, []).append(doc)
            term_tfs.setdefault(term, []).append(tf)

    n = manifest.doc_count
    k1, b = np.float64(params.k1), np.float64(params.b)
    avgdl = np.float64(manifest.avg_doc_len)
    doc_lens = np.asarray(manifest.doc_lens, dtype=np.float64)

    postings = {}
    for term, docs in term_docs.items():
        docs = np.asarray(docs, dtype=np.uint32)
        tfs = np.asarray(term_tfs[term], dtype=np.uint32)
        idf = _idf(n, docs.size)
        f = tfs.astype(np.float64)
        denom = f + k1 * (1.0 - b + b * doc_lens[docs] / avgdl)
        contribs = idf * (f * (k1 + 1.0)) / denom
        postings[term] = PostingList(term, idf, docs, tfs, contribs, block_size)
    return FtsIndex(postings, manifest, params, block_size)


def build_fts_index(manifest, corpus_path, params=Bm25Params(),
                    block_size=DEFAULT_BLOCK_SIZE) -> FtsIndex:
    corpus = load_corpus(corpus_path)
    if corpus.manifest.fingerprint() != manifest.fingerprint():
        raise IndexCorpusMismatchError(
            f"manifest does not match corpus at {corpus_path}"
        )
    return build_fts_index_from_corpus(corpus, params, block_size)


def _query_weights(index, query_terms):
    """Unique in-vocabulary query terms, sorted, with multiplicities."""
    counts = Counter(t for t in query_terms if t in index.terms)
    return sorted(counts.items())


def bm25_score(index, query_terms, doc) -> float:
    if not 0 <= doc < index.doc_count:
        raise ValueError(f"doc ordinal {doc} out of range")
    score = 0.0
    for term, weight in _query_weights(index, query_terms):
        plist = index.terms[term]
        i = int(np.searchsorted(plist.docs, doc))
        if i < plist.docs.size and plist.docs[i] == doc:
            score += weight * float(plist.contribs[i])
    return score


def exhaustive_topk(index, query_terms, k) -> RankedList:
    """Brute-force oracle: score every document, sort, truncate."""
    k = check_top_k(k)
    scores = np.zeros(index.doc_count, dtype=np.float64)
    for term, weight in _query_weights(index, query_terms):
        plist = index.terms[term]
        scores[plist.docs] += weight * plist.contribs
    docs = np.nonzero(scores > 0)[0]
    return ranked_list_from_arrays(PathTag.FTS, docs, scores[docs], k,
                                   positive_only=True)


class _Cursor:
    __slots__ = ("plist", "weight", "pos", "bound")

    def __init__(self, plist, weight):
        self.plist = plist
        self.weight = weight
        self.pos = 0
        self.bound = weight * float(plist.block_max.max())

    @property
    def cur_doc(self):
        return int(self.plist.docs[self.pos])

    @property
    def exhausted(self):
        return self.pos >= self.plist.docs.size

    def seek(self, target):
        self.pos = int(
            np.searchsorted(self.plist.docs, target, side="left")
        )

    def shallow_block(self, target):
        """Block max and block-final doc for the block holding the first
        posting at or after target; None when the list ends before it."""
        i = int(np.searchsorted(self.plist.docs, target, side="left"))
        if i >= self.plist.docs.size:
            return None
        blk = i // self.plist.block_size
        return (
            self.weight * float(self.plist.block_max[blk]),
            int(self.plist.block_last[blk]),
        )


def fts_topk(index, query_terms, k, stats=None) -> RankedList:
    """Exact top-k via block-max pruned document-at-a-time evaluation."""
    k = check_top_k(k)
    weights = _query_weights(index, query_terms)
    if not weights:
        return RankedList(PathTag.FTS, ())
    if stats is not None:
        stats.postings_total += sum(index.terms[t].doc_freq for t, _ in weights)

    by_term = [_Cursor(index.terms[t], w) for t, w in weights]
    active = list(by_term)
    heap: list[tuple[float, int]] = []  # (score, -doc), min-heap of top-k

    while active:
        active.sort(key=lambda c: c.cur_doc)
        theta = heap[0][0] if len(heap) == k else 0.0
        acc = 0.0
        p = None
        for i, c in enumerate(active):
            acc += c.bound
            if acc > theta:
                p = i
                break
        if p is None:
            break
        pivot = active[p].cur_doc
        while p + 1 < len(active) and active[p + 1].cur_doc <= pivot:
            p += 1

        bound = 0.0
        block_ends = []
        for c in active[: p + 1]:
            blk = c.shallow_block(pivot)
            if blk is None:
                continue
            bmax, blast = blk
            bound += bmax
            block_ends.append(blast)

        if bound > theta:
            # full evaluation, accumulating in canonical term order
            score = 0.0
            for c in by_term:
                if c.exhausted:
                    continue
                if c.cur_doc < pivot:
                    c.seek(pivot)
                    if c.exhausted:
                        continue
                if c.cur_doc == pivot:
                    score += c.weight * float(c.plist.contribs[c.pos])
                    if stats is not None:
                        stats.postings_scored += 1
                    c.pos += 1
            entry = (score, -pivot)
            if len(heap) < k:
                heapq.heappush(heap, entry)
            elif entry > heap[0]:
                heapq.heapreplace(heap, entry)
        else:
            # no doc before the nearest block boundary can beat theta
            if stats is not None:
                stats.blocks_skipped += 1
            target = min(block_ends) + 1
            if p + 1 < len(active):
                target = min(target, active[p + 1].cur_doc)
            for c in active[: p + 1]:
                if c.cur_doc < target:
                    c.seek(target)
        active = [c for c in active if not c.exhausted]

    ordered = sorted(heap, key=lambda e: (-e[0], -e[1]))
    return RankedList(
        PathTag.FTS, tuple(ScoredHit(-neg, score) for score, neg in ordered)
    )


# ---------------------------------------------------------------------------
# Serialization (.ftsidx)

def save_fts_index(index: FtsIndex, path):
    with open(path, "wb") as fh:
        fh.write(FTS_MAGIC)
        fh.write(struct.pack("<I", FTS_VERSION))
        fh.write(index.manifest.fingerprint())
        fh.write(struct.pack("<ddIQd", index.params.k1, index.params.b,
                             index.block_size, index.doc_count,
                             index.manifest.avg_doc_len))
        fh.write(struct.pack("<Q", len(index.terms)))
        fh.write(np.asarray(index.manifest.doc_lens, dtype="<u4").tobytes())
        for term in sorted(index.terms):
            plist = index.terms[term]
            raw = term.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<dQ", plist.idf, plist.doc_freq))
            fh.write(plist.docs.astype("<u4").tobytes())
            fh.write(plist.tfs.astype("<u4").tobytes())
            fh.write(plist.contribs.astype("<f8").tobytes())


def load_fts_index(path, manifest: CorpusManifest) -> FtsIndex:
    with open(path, "rb") as fh:
        _check_header(fh, path, FTS_MAGIC)
        fingerprint = _read_exact(fh, 16, path, "fingerprint")
        if fingerprint != manifest.fingerprint():
            raise IndexCorpusMismatchError(
                f"{path}: index was built from a different corpus"
            )
        k1, b, block_size, doc_count, avgdl = struct.unpack(
            "<ddIQd", _read_exact(fh, struct.calcsize("<ddIQd"), path, "params")
        )
        (n_terms,) = struct.unpack("<Q", _read_exact(fh, 8, path, "term count"))
        if doc_count != manifest.doc_count:
            raise IndexCorpusMismatchError(f"{path}: doc count mismatch")
        doc_lens = tuple(
            int(x)
            for x in np.frombuffer(
                _read_exact(fh, 4 * doc_count, path, "doc lens"), dtype="<u4"
            )
        )
        if manifest.doc_lens is not None and doc_lens != manifest.doc_lens:
            raise IndexCorpusMismatchError(f"{path}: document lengths mismatch")
        if manifest.doc_lens is None:
            # Sidecar manifests carry ids only; the stored lengths are
            # authoritative.
            manifest = CorpusManifest(manifest.external_ids, doc_lens)
        params = Bm25Params(k1, b)
        terms = {}
        for _ in range(n_terms):
            (term_len,) = struct.unpack("<H", _read_exact(fh, 2, path, "term len"))
            term = _read_exact(fh, term_len, path, "term").decode("utf-8")
            idf, df = struct.unpack("<dQ", _read_exact(fh, 16, path, "term header"))
            if df == 0:
                raise FileFormatError(f"{path}: empty posting list for {term!r}")
            docs = np.frombuffer(_read_exact(fh, 4 * df, path, "docs"), dtype="<u4")
            tfs = np.frombuffer(_read_exact(fh, 4 * df, path, "tfs"), dtype="<u4")
            contribs = np.frombuffer(
                _read_exact(fh, 8 * df, path, "contribs"), dtype="<f8"
            )
            terms[term] = PostingList(term, idf, docs, tfs, contribs, block_size)
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after payload")
    return FtsIndex(terms, manifest, params, block_size)


# ---------------------------------------------------------------------------
# Estimator wrapper

class FullTextSearch(SearchEstimator):
    """BM25 retrieval path with the fit/search estimator interface."""

    def __init__(self, k1=1.2, b=0.75, block_size=DEFAULT_BLOCK_SIZE):
        self.k1 = k1
        self.b = b
        self.block_size = block_size

    def fit(self, corpus: Corpus):
        self.index_ = build_fts_index_from_corpus(
            corpus, Bm25Params(self.k1, self.b), self.block_size
        )
        return self

    def search(self, query, k=10, stats=None) -> RankedList:
        check_fitted(self, "index_")
        terms = tokenize(query) if isinstance(query, str) else list(query)
        return fts_topk(self.index_, terms, k, stats=stats)

    def score(self, query, doc) -> float:
        check_fitted(self, "index_")
        terms = tokenize(query) if isinstance(query, str) else list(query)
        return bm25_score(self.index_, terms, doc)

    def save(self, path):
        check_fitted(self, "index_")
        save_fts_index(self.index_, path)

    @classmethod
    def load(cls, path, manifest) -> "FullTextSearch":
        index = load_fts_index(path, manifest)
        est = cls(index.params.k1, index.params.b, index.block_size)
        est.index_ = index
        return est
