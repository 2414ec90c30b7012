"""Ranking quality metrics.

nDCG with the exponential gain convention (2^rel - 1) and log2(i+1)
discounting.  Queries without any relevant document have an undefined
ideal ranking and are excluded from averages.
"""

from __future__ import annotations

import numpy as np


def dcg(gains) -> float:
    g = np.asarray(gains, dtype=np.float64)
    if g.size == 0:
        return 0.0
    discounts = np.log2(np.arange(2, g.size + 2, dtype=np.float64))
    return float(np.sum((np.exp2(g) - 1.0) / discounts))


def ndcg_at_k(ranking, rels, k=10):
    """nDCG@k for one query.

    ranking: external ids best-first.  rels: id -> integer grade >= 0;
    ids absent from rels count as grade 0.  Returns None when the query
    has no relevant documents at all.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    for grade in rels.values():
        if grade < 0:
            raise ValueError(f"negative relevance grade {grade}")
    gains = [rels.get(doc, 0) for doc in ranking[:k]]
    ideal = sorted(rels.values(), reverse=True)[:k]
    idcg = dcg(ideal)
    if idcg == 0.0:
        return None
    return dcg(gains) / idcg


def mean_ndcg(values):
    """Mean over defined per-query values; None when every query was
    excluded."""
    kept = [v for v in values if v is not None]
    if not kept:
        return None
    return float(np.mean(kept))
