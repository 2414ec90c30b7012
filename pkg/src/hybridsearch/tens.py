"""Tensor retrieval: per-token embeddings scored with MaxSim.

The store keeps token tensors on disk and maps them on demand; random
access touches only the pages holding the requested document, so large
stores never require full residency.  Search comes in two forms: a
brute-force oracle, and a compressed three-stage pipeline (centroid
bit-vector prefilter, table-driven approximate MaxSim over quantized
residuals, exact re-score of the surviving candidates).  Final scores
are always exact MaxSim values read back from the store.
"""

from __future__ import annotations

import mmap
import struct
from dataclasses import dataclass

import numpy as np

from .base import SearchEstimator
from .errors import (
    FileFormatError,
    IndexCorpusMismatchError,
    MissingTensorError,
)
from .io import _check_header, _read_exact, scan_tvec_offsets, write_tvec
from .types import PathTag, RankedList, ranked_list_from_arrays
from .validation import check_fitted, check_token_tensor

EMVB_MAGIC = b"HSEM"
EMVB_VERSION = 1
OFFSETS_MAGIC = b"HSTO"
ZERO_FINGERPRINT = b"\x00" * 16
KMEANS_ITERS = 20
PQ_CENTERS = 256


def default_n_centroids(total_tokens: int) -> int:
    """Desk-scale default, capped at the production value 8192."""
    return max(1, min(8192, total_tokens // 8))


# ---------------------------------------------------------------------------
# Tensor store

class TensorStore:
    """Random access to per-document token tensors in a .tvec file.

    Offsets live in a sidecar next to the payload; when the sidecar is
    missing or stale the record headers are rescanned and it is
    rewritten.  `loads` counts documents fetched since open, which the
    fusion layer uses to prove it touched only candidates.
    """

    def __init__(self, path, count, dim, offsets, token_counts):
        self.path = str(path)
        self.count = int(count)
        self.dim = int(dim)
        self.offsets = offsets
        self.token_counts = token_counts
        self.loads = 0
        if np.any(np.diff(offsets) <= 0):
            raise FileFormatError(f"{path}: offsets not strictly increasing")
        self._file = open(path, "rb")
        self._mm = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ)

    # -- lifecycle

    @classmethod
    def open(cls, path) -> "TensorStore":
        sidecar = _sidecar_path(path)
        meta = _try_read_sidecar(sidecar, path)
        if meta is None:
            count, dim, offsets, token_counts = scan_tvec_offsets(path)
            _write_sidecar(sidecar, count, dim, offsets, token_counts)
        else:
            count, dim, offsets, token_counts = meta
        return cls(path, count, dim, offsets, token_counts)

    @classmethod
    def create(cls, path, tensors, dim=None) -> "TensorStore":
        write_tvec(path, tensors, dim=dim)
        sidecar = _sidecar_path(path)
        count, dim, offsets, token_counts = scan_tvec_offsets(path)
        _write_sidecar(sidecar, count, dim, offsets, token_counts)
        return cls(path, count, dim, offsets, token_counts)

    def close(self):
        self._mm.close()
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- access

    @property
    def total_tokens(self) -> int:
        return int(self.token_counts.sum())

    def get(self, doc) -> np.ndarray:
        if not 0 <= doc < self.count:
            raise MissingTensorError(doc)
        self.loads += 1
        n = int(self.token_counts[doc])
        start = int(self.offsets[doc])
        rows = np.frombuffer(self._mm, dtype="<f4", count=n * self.dim,
                             offset=start)
        return rows.reshape(n, self.dim)

    def all_tokens(self) -> tuple[np.ndarray, np.ndarray]:
        """(total_tokens, dim) matrix plus per-doc start offsets into it.
        Build-time helper; loads the full payload."""
        flat = np.empty((self.total_tokens, self.dim), dtype=np.float32)
        starts = np.zeros(self.count + 1, dtype=np.int64)
        pos = 0
        for doc in range(self.count):
            n = int(self.token_counts[doc])
            rows = np.frombuffer(self._mm, dtype="<f4", count=n * self.dim,
                                 offset=int(self.offsets[doc]))
            flat[pos:pos + n] = rows.reshape(n, self.dim)
            starts[doc + 1] = pos + n
            pos += n
        return flat, starts


def _sidecar_path(path):
    return str(path) + ".offsets"


def _write_sidecar(sidecar, count, dim, offsets, token_counts):
    with open(sidecar, "wb") as fh:
        fh.write(OFFSETS_MAGIC)
        fh.write(struct.pack("<IQI", 1, count, dim))
        fh.write(np.asarray(offsets, dtype="<i8").tobytes())
        fh.write(np.asarray(token_counts, dtype="<i8").tobytes())


def _try_read_sidecar(sidecar, payload_path):
    import os

    if not os.path.exists(sidecar):
        return None
    try:
        with open(sidecar, "rb") as fh:
            if fh.read(4) != OFFSETS_MAGIC:
                return None
            version, count, dim = struct.unpack("<IQI", fh.read(16))
            if version != 1:
                return None
            offsets = np.frombuffer(fh.read(8 * count), dtype="<i8")
            token_counts = np.frombuffer(fh.read(8 * count), dtype="<i8")
            if offsets.size != count or token_counts.size != count:
                return None
        expected_end = (offsets[-1] + token_counts[-1] * dim * 4
                        if count else 20)
        if os.path.getsize(payload_path) != expected_end:
            return None  # stale sidecar; force a rescan
        return count, dim, offsets, token_counts
    except (OSError, struct.error):
        return None


# ---------------------------------------------------------------------------
# MaxSim

def maxsim(q_tensor, d_tensor) -> float:
    """Sum over query tokens of the best inner product in the document."""
    q = check_token_tensor(q_tensor, name="query tensor")
    d = check_token_tensor(d_tensor, name="doc tensor")
    if q.shape[1] != d.shape[1]:
        raise ValueError(
            f"dim mismatch: query {q.shape[1]} vs doc {d.shape[1]}"
        )
    sims = q.astype(np.float64) @ d.astype(np.float64).T
    return float(np.sum(np.max(sims, axis=1)))


def tens_topk_bruteforce(store: TensorStore, q_tensor, k) -> RankedList:
    """Exact MaxSim over every document in the store."""
    if k <= 0:
        return RankedList(PathTag.TENS, ())
    scores = np.empty(store.count, dtype=np.float64)
    for doc in range(store.count):
        scores[doc] = maxsim(q_tensor, store.get(doc))
    return ranked_list_from_arrays(
        PathTag.TENS, np.arange(store.count), scores, k
    )


# ---------------------------------------------------------------------------
# Seeded k-means

_ASSIGN_CHUNK = 8192


def _assign_nearest(pts, sq, centroids):
    """argmin over squared distances, chunked to bound the work matrix."""
    cent_sq = np.einsum("ij,ij->i", centroids, centroids)
    assign = np.empty(pts.shape[0], dtype=np.int64)
    for lo in range(0, pts.shape[0], _ASSIGN_CHUNK):
        hi = min(lo + _ASSIGN_CHUNK, pts.shape[0])
        d = sq[lo:hi, None] - 2 * pts[lo:hi] @ centroids.T + cent_sq
        assign[lo:hi] = np.argmin(d, axis=1)
    return assign


def _kmeans(points, k, rng, n_iter=KMEANS_ITERS):
    """k-means++ seeding then a fixed number of Lloyd iterations."""
    n = points.shape[0]
    if k > n:
        raise ValueError(f"cannot place {k} centroids on {n} points")
    pts = points.astype(np.float64)
    sq = np.einsum("ij,ij->i", pts, pts)

    centroids = np.empty((k, pts.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = pts[first]
    d2 = sq - 2 * pts @ centroids[0] + centroids[0] @ centroids[0]
    np.maximum(d2, 0, out=d2)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = pts[idx]
        dj = sq - 2 * pts @ centroids[j] + centroids[j] @ centroids[j]
        np.minimum(d2, np.maximum(dj, 0), out=d2)

    dim = pts.shape[1]
    for _ in range(n_iter):
        assign = _assign_nearest(pts, sq, centroids)
        counts = np.bincount(assign, minlength=k)
        sums = np.empty((k, dim), dtype=np.float64)
        for d_i in range(dim):
            sums[:, d_i] = np.bincount(assign, weights=pts[:, d_i],
                                       minlength=k)
        occupied = counts > 0  # empty clusters keep their centroid
        centroids[occupied] = sums[occupied] / counts[occupied, None]
    assign = _assign_nearest(pts, sq, centroids)
    return centroids.astype(np.float32), assign.astype(np.uint32)


# ---------------------------------------------------------------------------
# Compressed index

@dataclass
class EmvbIndex:
    centroids: np.ndarray        # (n_centroids, dim) f32
    assignments: np.ndarray      # (total_tokens,) u32
    codes: np.ndarray            # (total_tokens, n_subspaces) u8
    codebooks: np.ndarray        # (n_subspaces, n_pq_centers, sub_dim) f32
    bitvectors: np.ndarray       # (doc_count, ceil(n_centroids/8)) u8 packed
    token_starts: np.ndarray     # (doc_count+1,) i64 into flat token arrays
    fingerprint: bytes = ZERO_FINGERPRINT

    @property
    def n_centroids(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def n_subspaces(self) -> int:
        return int(self.codebooks.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    @property
    def doc_count(self) -> int:
        return int(self.token_starts.size - 1)


def build_emvb(store: TensorStore, n_centroids=None, n_subspaces=8, seed=0,
               fingerprint=ZERO_FINGERPRINT) -> EmvbIndex:
    tokens, starts = store.all_tokens()
    total = tokens.shape[0]
    dim = store.dim
    if n_centroids is None:
        n_centroids = default_n_centroids(total)
    if n_centroids < 1 or n_centroids > total:
        raise ValueError(
            f"n_centroids must be in [1, {total}], got {n_centroids}"
        )
    if dim % n_subspaces != 0:
        raise ValueError(f"dim {dim} not divisible by {n_subspaces} subspaces")

    rng = np.random.default_rng(seed)
    centroids, assignments = _kmeans(tokens, n_centroids, rng)
    residuals = tokens.astype(np.float64) - centroids[assignments].astype(
        np.float64
    )

    sub_dim = dim // n_subspaces
    n_pq = min(PQ_CENTERS, total)
    codebooks = np.empty((n_subspaces, n_pq, sub_dim), dtype=np.float32)
    codes = np.empty((total, n_subspaces), dtype=np.uint8)
    for s in range(n_subspaces):
        sub = residuals[:, s * sub_dim:(s + 1) * sub_dim]
        cb, assign = _kmeans(sub, n_pq, rng)
        codebooks[s] = cb
        codes[:, s] = assign.astype(np.uint8)

    n_bytes = (n_centroids + 7) // 8
    bitvectors = np.zeros((store.count, n_bytes), dtype=np.uint8)
    for doc in range(store.count):
        lo, hi = starts[doc], starts[doc + 1]
        present = np.zeros(n_centroids, dtype=np.uint8)
        present[assignments[lo:hi]] = 1
        bitvectors[doc] = np.packbits(present, bitorder="little")[:n_bytes]
    return EmvbIndex(centroids, assignments, codes, codebooks, bitvectors,
                     starts, fingerprint)


_POPCOUNT = np.unpackbits(
    np.arange(256, dtype=np.uint8)[:, None], axis=1
).sum(axis=1).astype(np.uint16)


def _candidate_docs(index, cent_table, n_probe, min_shared):
    """Stage 1: docs sharing at least min_shared probed centroids with
    the query.  cent_table is (n_query_tokens, n_centroids)."""
    n_probe = min(n_probe, index.n_centroids)
    probed = np.argpartition(-cent_table, n_probe - 1, axis=1)[:, :n_probe]
    wanted = np.unique(probed)
    mask_bits = np.zeros(index.n_centroids, dtype=np.uint8)
    mask_bits[wanted] = 1
    mask = np.packbits(mask_bits, bitorder="little")[: index.bitvectors.shape[1]]
    shared = _POPCOUNT[index.bitvectors & mask].sum(axis=1)
    return np.nonzero(shared >= min_shared)[0]


def _approx_scores(index, cent_table, pq_tables, docs):
    """Stage 2: MaxSim over reconstructed tokens via lookup tables."""
    scores = np.empty(docs.size, dtype=np.float64)
    for i, doc in enumerate(docs):
        lo = int(index.token_starts[doc])
        hi = int(index.token_starts[doc + 1])
        assign = index.assignments[lo:hi]
        sims = cent_table[:, assign].copy()
        doc_codes = index.codes[lo:hi]
        for s in range(index.n_subspaces):
            sims += pq_tables[s][:, doc_codes[:, s]]
        scores[i] = float(np.sum(np.max(sims, axis=1)))
    return scores


def tens_topk_emvb(index: EmvbIndex, store: TensorStore, q_tensor, k,
                   n_probe_docs=100, n_probe=32, min_shared=1,
                   filter_enabled=True, stats=None) -> RankedList:
    """Three-stage search; stage 3 re-scores candidates exactly, so the
    returned scores are true MaxSim values."""
    if k <= 0:
        return RankedList(PathTag.TENS, ())
    q = check_token_tensor(q_tensor, dim=index.dim, name="query tensor")
    q64 = q.astype(np.float64)

    cent_table = q64 @ index.centroids.astype(np.float64).T
    if filter_enabled:
        docs = _candidate_docs(index, cent_table, n_probe, min_shared)
    else:
        docs = np.arange(index.doc_count)
    if stats is not None:
        stats["candidates"] = int(docs.size)
    if docs.size == 0:
        return RankedList(PathTag.TENS, ())

    sub_dim = index.dim // index.n_subspaces
    pq_tables = [
        q64[:, s * sub_dim:(s + 1) * sub_dim]
        @ index.codebooks[s].astype(np.float64).T
        for s in range(index.n_subspaces)
    ]
    approx = _approx_scores(index, cent_table, pq_tables, docs)

    if docs.size > n_probe_docs:
        order = np.lexsort((docs, -approx))[:n_probe_docs]
        survivors = docs[order]
    else:
        survivors = docs
    if stats is not None:
        stats["rescored"] = int(survivors.size)

    exact = np.empty(survivors.size, dtype=np.float64)
    for i, doc in enumerate(survivors):
        exact[i] = maxsim(q, store.get(int(doc)))
    return ranked_list_from_arrays(PathTag.TENS, survivors, exact, k)


# ---------------------------------------------------------------------------
# Serialization (.emvb)

def save_emvb_index(index: EmvbIndex, path):
    with open(path, "wb") as fh:
        fh.write(EMVB_MAGIC)
        fh.write(struct.pack("<I", EMVB_VERSION))
        fh.write(index.fingerprint)
        fh.write(struct.pack(
            "<IIIQQI",
            index.n_centroids, index.n_subspaces, index.dim,
            index.doc_count, index.assignments.size,
            index.codebooks.shape[1],
        ))
        fh.write(index.token_starts.astype("<i8").tobytes())
        fh.write(index.centroids.astype("<f4").tobytes())
        fh.write(index.assignments.astype("<u4").tobytes())
        fh.write(index.codes.tobytes())
        fh.write(index.codebooks.astype("<f4").tobytes())
        fh.write(index.bitvectors.tobytes())


def load_emvb_index(path, manifest=None) -> EmvbIndex:
    with open(path, "rb") as fh:
        _check_header(fh, path, EMVB_MAGIC)
        fingerprint = _read_exact(fh, 16, path, "fingerprint")
        if manifest is not None and fingerprint != manifest.fingerprint():
            raise IndexCorpusMismatchError(
                f"{path}: index was built from a different corpus"
            )
        fmt = "<IIIQQI"
        n_cent, n_sub, dim, doc_count, total, n_pq = struct.unpack(
            fmt, _read_exact(fh, struct.calcsize(fmt), path, "header")
        )
        if dim % n_sub != 0:
            raise FileFormatError(f"{path}: dim not divisible by subspaces")
        sub_dim = dim // n_sub
        token_starts = np.frombuffer(
            _read_exact(fh, 8 * (doc_count + 1), path, "token starts"),
            dtype="<i8",
        )
        centroids = np.frombuffer(
            _read_exact(fh, 4 * n_cent * dim, path, "centroids"), dtype="<f4"
        ).reshape(n_cent, dim)
        assignments = np.frombuffer(
            _read_exact(fh, 4 * total, path, "assignments"), dtype="<u4"
        )
        codes = np.frombuffer(
            _read_exact(fh, total * n_sub, path, "codes"), dtype=np.uint8
        ).reshape(total, n_sub)
        codebooks = np.frombuffer(
            _read_exact(fh, 4 * n_sub * n_pq * sub_dim, path, "codebooks"),
            dtype="<f4",
        ).reshape(n_sub, n_pq, sub_dim)
        n_bytes = (n_cent + 7) // 8
        bitvectors = np.frombuffer(
            _read_exact(fh, doc_count * n_bytes, path, "bitvectors"),
            dtype=np.uint8,
        ).reshape(doc_count, n_bytes)
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after payload")
    return EmvbIndex(centroids, assignments, codes, codebooks, bitvectors,
                     token_starts, fingerprint)


# ---------------------------------------------------------------------------
# Estimator wrapper

class TensorSearch(SearchEstimator):
    """Compressed tensor retrieval path with the fit/search interface."""

    def __init__(self, n_centroids=None, n_subspaces=8, seed=0,
                 n_probe_docs=100, n_probe=32, min_shared=1):
        self.n_centroids = n_centroids
        self.n_subspaces = n_subspaces
        self.seed = seed
        self.n_probe_docs = n_probe_docs
        self.n_probe = n_probe
        self.min_shared = min_shared

    def fit(self, store: TensorStore, fingerprint=ZERO_FINGERPRINT):
        self.store_ = store
        self.index_ = build_emvb(store, self.n_centroids, self.n_subspaces,
                                 self.seed, fingerprint)
        return self

    def search(self, q_tensor, k=10, stats=None) -> RankedList:
        check_fitted(self, ("index_", "store_"))
        return tens_topk_emvb(self.index_, self.store_, q_tensor, k,
                              self.n_probe_docs, self.n_probe,
                              self.min_shared, stats=stats)

    def save(self, path):
        check_fitted(self, "index_")
        save_emvb_index(self.index_, path)

    @classmethod
    def load(cls, path, store, manifest=None) -> "TensorSearch":
        index = load_emvb_index(path, manifest)
        est = cls(index.n_centroids, index.n_subspaces)
        est.index_ = index
        est.store_ = store
        return est
