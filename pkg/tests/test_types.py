"""Domain type invariants: ranked lists, manifests, sparse vectors."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridsearch.types import (
    CorpusManifest,
    PathTag,
    RankedList,
    ScoredHit,
    SparseVector,
    ranked_list_from_arrays,
)


def hits(*pairs):
    return tuple(ScoredHit(d, s) for d, s in pairs)


class TestRankedList:
    def test_ranks_are_one_based(self):
        rl = RankedList(PathTag.FTS, hits((7, 3.0), (2, 1.5)))
        assert rl.ranks() == {7: 1, 2: 2}

    def test_ties_break_by_ascending_ordinal(self):
        RankedList(PathTag.FTS, hits((1, 2.0), (5, 2.0), (9, 2.0)))
        with pytest.raises(ValueError):
            RankedList(PathTag.FTS, hits((5, 2.0), (1, 2.0)))

    def test_descending_score_required(self):
        with pytest.raises(ValueError):
            RankedList(PathTag.FTS, hits((1, 1.0), (2, 2.0)))

    def test_duplicate_doc_rejected(self):
        with pytest.raises(ValueError):
            RankedList(PathTag.FTS, hits((1, 2.0), (1, 1.0)))

    def test_non_finite_score_rejected(self):
        with pytest.raises(ValueError):
            ScoredHit(1, float("nan"))
        with pytest.raises(ValueError):
            ScoredHit(1, float("inf"))

    def test_truncated(self):
        rl = RankedList(PathTag.SVS, hits((1, 3.0), (2, 2.0), (3, 1.0)))
        assert rl.truncated(2).docs() == [1, 2]
        assert rl.truncated(10) is rl

    def test_digest_distinguishes_scores(self):
        a = RankedList(PathTag.FTS, hits((1, 2.0),))
        b = RankedList(PathTag.FTS, hits((1, 2.0 + 1e-12),))
        assert a.digest() != b.digest()
        assert a.digest() == RankedList(PathTag.FTS, hits((1, 2.0),)).digest()


class TestRankedListFromArrays:
    def test_tie_break_and_topk(self):
        docs = [9, 4, 7, 1]
        scores = [2.0, 2.0, 5.0, 1.0]
        rl = ranked_list_from_arrays(PathTag.DVS, docs, scores, k=3)
        assert rl.docs() == [7, 4, 9]

    def test_positive_only_drops_zeros(self):
        rl = ranked_list_from_arrays(
            PathTag.FTS, [0, 1, 2], [0.0, -1.0, 3.0], k=10, positive_only=True
        )
        assert rl.docs() == [2]

    def test_empty(self):
        rl = ranked_list_from_arrays(PathTag.FTS, [], [], k=5)
        assert len(rl) == 0

    @given(
        st.lists(
            st.floats(min_value=-100, max_value=100, allow_nan=False),
            min_size=1,
            max_size=30,
        ),
        st.integers(min_value=1, max_value=10),
    )
    def test_matches_sorted_oracle(self, scores, k):
        docs = list(range(len(scores)))
        expected = sorted(zip(docs, scores), key=lambda p: (-p[1], p[0]))[:k]
        rl = ranked_list_from_arrays(PathTag.DVS, docs, scores, k=k)
        assert [(h.doc, h.score) for h in rl.hits] == [
            (d, float(s)) for d, s in expected
        ]


class TestCorpusManifest:
    def test_counts_and_avg(self):
        m = CorpusManifest(("a", "b", "c"), (2, 3, 4))
        assert m.doc_count == 3
        assert m.avg_doc_len == pytest.approx(3.0)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            CorpusManifest(("a", "a"), (1, 2))

    def test_fingerprint_sensitive_to_ids_and_order(self):
        base = CorpusManifest(("a", "b"), (1, 1)).fingerprint()
        assert base == CorpusManifest(("a", "b"), (5, 9)).fingerprint()
        assert base != CorpusManifest(("b", "a"), (1, 1)).fingerprint()
        assert base != CorpusManifest(("a", "b", "c"), (1, 1, 1)).fingerprint()
        assert len(base) == 16

    def test_fingerprint_separator_prevents_concat_collision(self):
        left = CorpusManifest(("ab", "c"), (1, 1)).fingerprint()
        right = CorpusManifest(("a", "bc"), (1, 1)).fingerprint()
        assert left != right

    def test_ordinal_index(self):
        m = CorpusManifest(("x", "y"), (1, 1))
        assert m.ordinal_index() == {"x": 0, "y": 1}


class TestSparseVector:
    def test_drops_nonpositive_weights(self):
        v = SparseVector([1, 2, 3], [0.5, 0.0, -1.0])
        assert v.nnz == 1
        assert list(v.term_ids) == [1]

    def test_requires_ascending_ids(self):
        with pytest.raises(ValueError):
            SparseVector([3, 1], [1.0, 1.0])
        with pytest.raises(ValueError):
            SparseVector([2, 2], [1.0, 1.0])

    def test_from_dict_sorts(self):
        v = SparseVector.from_dict({9: 1.0, 2: 2.0})
        assert list(v.term_ids) == [2, 9]
        assert list(v.weights) == [2.0, 1.0]

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            SparseVector([1], [np.nan])

    def test_equality(self):
        assert SparseVector([1], [2.0]) == SparseVector([1], [2.0])
        assert SparseVector([1], [2.0]) != SparseVector([2], [2.0])
