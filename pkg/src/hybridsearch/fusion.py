"""Candidate fusion across retrieval paths.

Three strategies over per-path ranked lists: reciprocal-rank fusion
(rank-only), weighted-sum fusion over normalized scores, and exact
tensor re-ranking of the candidate union.  All of them treat a document
missing from some list as contributing zero from that list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tens import TensorStore, maxsim
from .types import PathTag, RankedList, ranked_list_from_arrays

DEFAULT_KAPPA = 60.0
FUSION_METHODS = ("rrf", "ws", "trf")
WS_NORMALIZATIONS = ("minmax", "none")


@dataclass
class FusionConfig:
    """Engine-facing fusion settings.

    k0 is the per-path candidate depth fed into fusion; k is the final
    result size.  weights apply to WS only and default to uniform.
    """

    method: str = "rrf"
    kappa: float = DEFAULT_KAPPA
    weights: tuple = None
    normalization: str = "minmax"
    k0: int = 100
    k: int = 10

    def __post_init__(self):
        if self.method not in FUSION_METHODS:
            raise ValueError(f"unknown fusion method {self.method!r}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.normalization not in WS_NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.k0 < 1 or self.k < 1:
            raise ValueError("k0 and k must be at least 1")
        if self.weights is not None:
            self.weights = tuple(float(w) for w in self.weights)
            _check_weights(self.weights)

    def to_dict(self) -> dict:
        out = {"method": self.method, "kappa": self.kappa,
               "normalization": self.normalization,
               "k0": self.k0, "k": self.k}
        if self.weights is not None:
            out["weights"] = list(self.weights)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FusionConfig":
        known = {"method", "kappa", "weights", "normalization", "k0", "k"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown fusion config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "weights" in kwargs and kwargs["weights"] is not None:
            kwargs["weights"] = tuple(kwargs["weights"])
        return cls(**kwargs)


def _check_weights(weights):
    if any(w < 0 for w in weights):
        raise ValueError("weights must be non-negative")
    if not any(w > 0 for w in weights):
        raise ValueError("at least one weight must be positive")


def _check_lists(lists):
    lists = tuple(lists)
    if not lists:
        raise ValueError("fusion requires at least one input list")
    for rl in lists:
        if not isinstance(rl, RankedList):
            raise TypeError(f"expected RankedList, got {type(rl).__name__}")
    return lists


def rrf_fuse(lists, kappa=DEFAULT_KAPPA, k=10) -> RankedList:
    """Sum of 1/(kappa + rank) over the lists containing each candidate.

    Ranks are 1-based within each list; a list that does not contain a
    document contributes nothing for it.  Depends only on ranks, never
    on the input scores.
    """
    lists = _check_lists(lists)
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    acc: dict[int, float] = {}
    for rl in lists:
        for rank, hit in enumerate(rl.hits, start=1):
            acc[hit.doc] = acc.get(hit.doc, 0.0) + 1.0 / (kappa + rank)
    return _top_k_from_dict(acc, k)


def ws_fuse(lists, weights=None, normalization="minmax", k=10) -> RankedList:
    """Weighted sum of per-list normalized scores.

    minmax maps each list's scores onto [0,1] over its own candidates;
    a constant list maps to 1.0 for every member so that bare list
    membership still counts.  normalization="none" sums raw scores.
    """
    lists = _check_lists(lists)
    if weights is None:
        weights = (1.0,) * len(lists)
    weights = tuple(float(w) for w in weights)
    if len(weights) != len(lists):
        raise ValueError(
            f"{len(weights)} weights for {len(lists)} lists"
        )
    _check_weights(weights)
    if normalization not in WS_NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")

    acc: dict[int, float] = {}
    for w, rl in zip(weights, lists):
        if w == 0.0 or not rl.hits:
            continue
        scores = np.asarray(rl.scores(), dtype=np.float64)
        if normalization == "minmax":
            lo, hi = scores.min(), scores.max()
            if hi > lo:
                scores = (scores - lo) / (hi - lo)
            else:
                scores = np.ones_like(scores)
        for hit, s in zip(rl.hits, scores):
            acc[hit.doc] = acc.get(hit.doc, 0.0) + w * float(s)
    return _top_k_from_dict(acc, k)


def trf_rerank(lists, q_tensor, store: TensorStore, k=10) -> RankedList:
    """Re-score the candidate union exactly from the tensor store.

    Input lists contribute membership only; output scores are true
    MaxSim values.  Tensors are fetched just for union members, so the
    store's load counter stays bounded by the union size.
    """
    lists = _check_lists(lists)
    union = sorted({hit.doc for rl in lists for hit in rl.hits})
    if not union:
        return RankedList(PathTag.FUSED, ())
    docs = np.asarray(union, dtype=np.int64)
    scores = np.empty(docs.size, dtype=np.float64)
    for i, doc in enumerate(docs):
        scores[i] = maxsim(q_tensor, store.get(int(doc)))
    return ranked_list_from_arrays(PathTag.FUSED, docs, scores, k)


def candidate_union(lists) -> list[int]:
    """Deduplicated, ascending ordinals across the given lists."""
    lists = _check_lists(lists)
    return sorted({hit.doc for rl in lists for hit in rl.hits})


def fuse(lists, config: FusionConfig, q_tensor=None,
         store=None) -> RankedList:
    """Dispatch on config.method; TRF needs the query tensor and store."""
    if config.method == "rrf":
        return rrf_fuse(lists, config.kappa, config.k)
    if config.method == "ws":
        return ws_fuse(lists, config.weights, config.normalization, config.k)
    if q_tensor is None or store is None:
        raise ValueError("trf fusion requires a query tensor and a store")
    return trf_rerank(lists, q_tensor, store, config.k)


def _top_k_from_dict(acc: dict[int, float], k: int) -> RankedList:
    if not acc or k <= 0:
        return RankedList(PathTag.FUSED, ())
    docs = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
    scores = np.fromiter(acc.values(), dtype=np.float64, count=len(acc))
    return ranked_list_from_arrays(PathTag.FUSED, docs, scores, k)
