"""Dense retrieval: HNSW graph search under inner-product similarity.

Construction is deterministic for a fixed seed: the only randomness is
the per-insertion level draw, nodes are inserted in ordinal order, and
every heap key breaks ties on ordinal.  With quantization enabled the
graph is traversed on dequantized 8-bit codes and the final candidate
pool is re-scored against the raw float32 vectors before truncation, so
quantization error affects candidate selection but never final scores.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass

import numpy as np

from .base import SearchEstimator
from .errors import FileFormatError, IndexCorpusMismatchError
from .io import _check_header, _read_exact
from .types import PathTag, RankedList, ranked_list_from_arrays
from .validation import check_dense_matrix, check_dense_vector, check_fitted

DVS_MAGIC = b"HSDG"
DVS_VERSION = 1
ZERO_FINGERPRINT = b"\x00" * 16


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 100

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if self.ef_construction < self.M:
            raise ValueError("ef_construction must be >= M")
        if self.ef_search < 1:
            raise ValueError("ef_search must be >= 1")


def quantize_vector(v, bits=8):
    """Per-vector affine quantization to unsigned integer codes."""
    v = np.asarray(v, dtype=np.float32)
    levels = (1 << bits) - 1
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        return np.zeros(v.shape, dtype=np.uint8), 0.0, lo
    scale = (hi - lo) / levels
    codes = np.clip(np.rint((v - lo) / scale), 0, levels).astype(np.uint8)
    return codes, scale, lo


def dequantize_vector(codes, scale, offset):
    return codes.astype(np.float32) * np.float32(scale) + np.float32(offset)


class DvsIndex:
    """HNSW graph over a dense float32 matrix.

    adjacency[node][level] is the neighbor list of `node` at `level`;
    nodes exist at levels 0..levels[node].  Raw vectors are always kept
    for exact re-scoring.
    """

    def __init__(self, vectors, params, seed, fingerprint=ZERO_FINGERPRINT):
        self.vectors = check_dense_matrix(vectors, name="vectors")
        if self.vectors.shape[0] < 1:
            raise ValueError("need at least one vector")
        self.params = params
        self.seed = int(seed)
        self.quantized = False
        self.fingerprint = fingerprint
        self.levels = np.zeros(self.count, dtype=np.int32)
        self.adjacency: list[list[list[int]]] = [[] for _ in range(self.count)]
        self.entry_point = 0
        self.max_level = 0
        self.codes = None
        self.scales = None
        self.offsets = None

    def enable_quantization(self):
        """Switch graph traversal to 8-bit codes.  The graph itself is
        unchanged; only query-time candidate scoring is affected."""
        if self.quantized:
            return self
        self.codes = np.empty(self.vectors.shape, dtype=np.uint8)
        self.scales = np.empty(self.count, dtype=np.float32)
        self.offsets = np.empty(self.count, dtype=np.float32)
        for i in range(self.count):
            self.codes[i], self.scales[i], self.offsets[i] = quantize_vector(
                self.vectors[i]
            )
        self.quantized = True
        return self

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def traversal_matrix(self) -> np.ndarray:
        """Matrix used for graph traversal scores.  Raw mode hands back
        the float32 vectors; dots against a float64 query upcast exactly,
        so no resident float64 copy is needed."""
        if not self.quantized:
            return self.vectors
        deq = self.codes.astype(np.float64)
        deq *= self.scales[:, None].astype(np.float64)
        deq += self.offsets[:, None].astype(np.float64)
        return deq

    def degree_cap(self, level) -> int:
        return 2 * self.params.M if level == 0 else self.params.M


def _select_neighbors(sims_to_q, candidates, m, cand_vectors):
    """Diversity heuristic: keep a candidate only if it is closer to the
    query than to every already-selected neighbor; backfill afterwards."""
    order = sorted(range(len(candidates)), key=lambda i: (-sims_to_q[i],
                                                          candidates[i]))
    selected: list[int] = []
    selected_vecs = []
    rejected = []
    for idx in order:
        if len(selected) >= m:
            break
        node = candidates[idx]
        vec = cand_vectors[idx]
        ok = True
        for svec in selected_vecs:
            if float(np.dot(vec, svec)) > sims_to_q[idx]:
                ok = False
                break
        if ok:
            selected.append(node)
            selected_vecs.append(vec)
        else:
            rejected.append(idx)
    for idx in rejected:
        if len(selected) >= m:
            break
        selected.append(candidates[idx])
        selected_vecs.append(cand_vectors[idx])
    return selected


def _search_layer(matrix, adjacency, q, eps, ef, level):
    """Best-first expansion at one level; returns [(sim, node)] best-first."""
    n = matrix.shape[0]
    visited = np.zeros(n, dtype=bool)
    cand: list[tuple[float, int]] = []
    results: list[tuple[float, int]] = []  # (sim, -node) min-heap, worst first
    for sim, node in eps:
        if visited[node]:
            continue
        visited[node] = True
        heapq.heappush(cand, (-sim, node))
        heapq.heappush(results, (sim, -node))
    while len(results) > ef:
        heapq.heappop(results)
    while cand:
        neg_sim, node = heapq.heappop(cand)
        sim = -neg_sim
        if len(results) == ef and sim < results[0][0]:
            break
        neighbors = adjacency[node][level] if level < len(adjacency[node]) else []
        fresh = [nb for nb in neighbors if not visited[nb]]
        if not fresh:
            continue
        for nb in fresh:
            visited[nb] = True
        sims = matrix[fresh] @ q
        for nb, s in zip(fresh, sims):
            s = float(s)
            entry = (s, -nb)
            if len(results) < ef:
                heapq.heappush(results, entry)
                heapq.heappush(cand, (-s, nb))
            elif entry > results[0]:
                heapq.heapreplace(results, entry)
                heapq.heappush(cand, (-s, nb))
    out = sorted(results, key=lambda e: (-e[0], -e[1]))
    return [(sim, -neg) for sim, neg in out]


def build_hnsw(vectors, params=HnswParams(), seed=0, quantize=False,
               fingerprint=ZERO_FINGERPRINT) -> DvsIndex:
    index = DvsIndex(vectors, params, seed, fingerprint)
    rng = np.random.default_rng(seed)
    m_l = 1.0 / np.log(params.M)
    # transient f64 copy: keeps intra-build dot products in 64-bit
    matrix = np.ascontiguousarray(index.vectors, dtype=np.float64)
    adjacency = index.adjacency

    for node in range(index.count):
        level = int(-np.log(rng.random()) * m_l)
        index.levels[node] = level
        adjacency[node] = [[] for _ in range(level + 1)]
        if node == 0:
            index.entry_point = 0
            index.max_level = level
            continue
        q = matrix[node]
        ep = index.entry_point
        ep_sim = float(matrix[ep] @ q)
        # greedy descent over layers above the node's level
        for lc in range(index.max_level, level, -1):
            improved = True
            while improved:
                improved = False
                neighbors = (adjacency[ep][lc]
                             if lc < len(adjacency[ep]) else [])
                for nb in neighbors:
                    s = float(matrix[nb] @ q)
                    if s > ep_sim or (s == ep_sim and nb < ep):
                        ep, ep_sim = nb, s
                        improved = True
        eps = [(ep_sim, ep)]
        for lc in range(min(level, index.max_level), -1, -1):
            found = _search_layer(matrix, adjacency, q,
                                  eps, params.ef_construction, lc)
            cand_nodes = [nd for _, nd in found]
            cand_sims = [s for s, _ in found]
            cand_vecs = [matrix[nd] for nd in cand_nodes]
            chosen = _select_neighbors(cand_sims, cand_nodes, params.M,
                                       cand_vecs)
            adjacency[node][lc] = list(chosen)
            cap = index.degree_cap(lc)
            for nb in chosen:
                links = adjacency[nb][lc]
                links.append(node)
                if len(links) > cap:
                    sims = [float(matrix[x] @ matrix[nb]) for x in links]
                    vecs = [matrix[x] for x in links]
                    adjacency[nb][lc] = _select_neighbors(
                        sims, links, cap, vecs
                    )
            eps = found
        if level > index.max_level:
            index.max_level = level
            index.entry_point = node
    if quantize:
        index.enable_quantization()
    return index


def dvs_bruteforce(vectors, q, k) -> RankedList:
    """Exact inner-product top-k oracle."""
    if k <= 0:
        return RankedList(PathTag.DVS, ())
    vectors = check_dense_matrix(vectors, name="vectors")
    q = check_dense_vector(q, dim=vectors.shape[1])
    sims = vectors.astype(np.float64) @ q.astype(np.float64)
    return ranked_list_from_arrays(
        PathTag.DVS, np.arange(vectors.shape[0]), sims, k
    )


def dvs_topk(index: DvsIndex, q, k, ef_search=None) -> RankedList:
    """Approximate top-k; exact re-scoring of the candidate pool when
    the graph was traversed on quantized vectors."""
    if k <= 0:
        return RankedList(PathTag.DVS, ())
    ef = index.params.ef_search if ef_search is None else int(ef_search)
    if ef < k:
        raise ValueError(f"ef_search={ef} must be >= k={k}")
    q64 = check_dense_vector(q, dim=index.dim).astype(np.float64)
    matrix = index.traversal_matrix()
    ep = index.entry_point
    ep_sim = float(matrix[ep] @ q64)
    for lc in range(index.max_level, 0, -1):
        improved = True
        while improved:
            improved = False
            neighbors = (index.adjacency[ep][lc]
                         if lc < len(index.adjacency[ep]) else [])
            for nb in neighbors:
                s = float(matrix[nb] @ q64)
                if s > ep_sim or (s == ep_sim and nb < ep):
                    ep, ep_sim = nb, s
                    improved = True
    found = _search_layer(matrix, index.adjacency, q64, [(ep_sim, ep)], ef, 0)
    nodes = np.asarray([nd for _, nd in found], dtype=np.int64)
    if index.quantized:
        scores = index.vectors[nodes] @ q64
    else:
        scores = np.asarray([s for s, _ in found], dtype=np.float64)
    return ranked_list_from_arrays(PathTag.DVS, nodes, scores, k)


# ---------------------------------------------------------------------------
# Serialization (.dvsidx)

def save_dvs_index(index: DvsIndex, path):
    with open(path, "wb") as fh:
        fh.write(DVS_MAGIC)
        fh.write(struct.pack("<I", DVS_VERSION))
        fh.write(index.fingerprint)
        fh.write(struct.pack(
            "<IIIIQQIB",
            index.params.M, index.params.ef_construction,
            index.params.ef_search, index.dim, index.count,
            index.entry_point, index.max_level, 1 if index.quantized else 0,
        ))
        fh.write(struct.pack("<q", index.seed))
        fh.write(index.levels.astype("<i4").tobytes())
        fh.write(index.vectors.astype("<f4").tobytes())
        if index.quantized:
            fh.write(index.codes.tobytes())
            fh.write(index.scales.astype("<f4").tobytes())
            fh.write(index.offsets.astype("<f4").tobytes())
        for node in range(index.count):
            for level in range(index.levels[node] + 1):
                links = index.adjacency[node][level]
                fh.write(struct.pack("<I", len(links)))
                fh.write(np.asarray(links, dtype="<u4").tobytes())


def load_dvs_index(path, manifest=None) -> DvsIndex:
    with open(path, "rb") as fh:
        _check_header(fh, path, DVS_MAGIC)
        fingerprint = _read_exact(fh, 16, path, "fingerprint")
        if manifest is not None and fingerprint != manifest.fingerprint():
            raise IndexCorpusMismatchError(
                f"{path}: index was built from a different corpus"
            )
        fmt = "<IIIIQQIB"
        m, efc, efs, dim, count, entry, max_level, quantized = struct.unpack(
            fmt, _read_exact(fh, struct.calcsize(fmt), path, "header")
        )
        (seed,) = struct.unpack("<q", _read_exact(fh, 8, path, "seed"))
        levels = np.frombuffer(
            _read_exact(fh, 4 * count, path, "levels"), dtype="<i4"
        ).astype(np.int32)
        vectors = np.frombuffer(
            _read_exact(fh, 4 * count * dim, path, "vectors"), dtype="<f4"
        ).reshape(count, dim)
        index = DvsIndex(vectors, HnswParams(m, efc, efs), seed,
                         fingerprint=fingerprint)
        index.quantized = bool(quantized)
        if quantized:
            index.codes = np.frombuffer(
                _read_exact(fh, count * dim, path, "codes"), dtype=np.uint8
            ).reshape(count, dim)
            index.scales = np.frombuffer(
                _read_exact(fh, 4 * count, path, "scales"), dtype="<f4"
            ).astype(np.float32)
            index.offsets = np.frombuffer(
                _read_exact(fh, 4 * count, path, "offsets"), dtype="<f4"
            ).astype(np.float32)
        index.levels = levels
        index.entry_point = int(entry)
        index.max_level = int(max_level)
        for node in range(count):
            node_adj = []
            for level in range(levels[node] + 1):
                (deg,) = struct.unpack(
                    "<I", _read_exact(fh, 4, path, f"node {node} degree")
                )
                links = np.frombuffer(
                    _read_exact(fh, 4 * deg, path, f"node {node} links"),
                    dtype="<u4",
                )
                node_adj.append([int(x) for x in links])
            index.adjacency[node] = node_adj
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after payload")
    return index


# ---------------------------------------------------------------------------
# Estimator wrapper

class DenseVectorSearch(SearchEstimator):
    """HNSW dense retrieval path with the fit/search interface."""

    def __init__(self, M=16, ef_construction=200, ef_search=100,
                 quantize=False, seed=0):
        self.M = M
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self.quantize = quantize
        self.seed = seed

    def fit(self, vectors, fingerprint=ZERO_FINGERPRINT):
        params = HnswParams(self.M, self.ef_construction, self.ef_search)
        self.index_ = build_hnsw(vectors, params, self.seed, self.quantize,
                                 fingerprint)
        return self

    def search(self, q, k=10, ef_search=None) -> RankedList:
        check_fitted(self, "index_")
        return dvs_topk(self.index_, q, k, ef_search)

    def save(self, path):
        check_fitted(self, "index_")
        save_dvs_index(self.index_, path)

    @classmethod
    def load(cls, path, manifest=None) -> "DenseVectorSearch":
        index = load_dvs_index(path, manifest)
        est = cls(index.params.M, index.params.ef_construction,
                  index.params.ef_search, index.quantized, index.seed)
        est.index_ = index
        return est
