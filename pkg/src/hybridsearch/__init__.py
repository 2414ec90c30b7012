"""Hybrid retrieval engine with four scoring paths and rank fusion."""

from .types import PathTag, RankedList, ScoredHit, SparseVector, CorpusManifest

__version__ = "0.1.0"

__all__ = [
    "PathTag",
    "RankedList",
    "ScoredHit",
    "SparseVector",
    "CorpusManifest",
    "__version__",
]
