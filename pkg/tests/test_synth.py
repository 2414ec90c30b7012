"""Synthetic corpus generator checks.

The planted-signal assertions double as the ground truth for the
engine-level quality experiments: if a single clean path cannot reach
nDCG 0.7 here, fused comparisons built on this data mean nothing.
"""

import hashlib
import json
import os

import numpy as np
import pytest

from hybridsearch.dvs import DenseVectorSearch
from hybridsearch.engine import QuerySpec, execute
from hybridsearch.fusion import FusionConfig
from hybridsearch.io import read_dvec, read_qrels, read_svec, read_tvec
from hybridsearch.metrics import mean_ndcg, ndcg_at_k
from hybridsearch.synth import SynthSpec, generate_synthetic


def _tree_digests(root):
    digests = {}
    for name in sorted(os.listdir(root)):
        with open(os.path.join(root, name), "rb") as fh:
            digests[name] = hashlib.sha256(fh.read()).hexdigest()
    return digests


class TestSpecValidation:
    def test_defaults_are_feasible(self):
        SynthSpec()

    def test_relevant_sets_must_fit(self):
        with pytest.raises(ValueError, match="disjoint"):
            SynthSpec(doc_count=30, n_queries=4, relevant_per_query=10)

    def test_vocab_floor(self):
        with pytest.raises(ValueError, match="vocab"):
            SynthSpec(vocab_size=5)

    def test_tensor_token_floor(self):
        # must leave room for the anchor rows
        with pytest.raises(ValueError, match="tensor_tokens_per_doc"):
            SynthSpec(tensor_tokens_per_doc=(2, 10))

    def test_bad_token_range(self):
        with pytest.raises(ValueError, match="tokens_per_doc"):
            SynthSpec(tokens_per_doc=(10, 5))

    def test_unknown_noise_path(self):
        with pytest.raises(ValueError, match="noise_path"):
            SynthSpec(noise_path="dense")


class TestDeterminism:
    def test_same_spec_same_bytes(self, tmp_path):
        spec = SynthSpec(seed=9, doc_count=80, vocab_size=200,
                         n_queries=6, relevant_per_query=4)
        generate_synthetic(spec, tmp_path / "a")
        generate_synthetic(spec, tmp_path / "b")
        da, db = _tree_digests(tmp_path / "a"), _tree_digests(tmp_path / "b")
        assert da == db
        assert set(da) == {
            "corpus.jsonl", "queries.jsonl", "qrels.txt", "synth.json",
            "docs.svec", "queries.svec", "docs.dvec", "queries.dvec",
            "docs.tvec", "queries.tvec",
        }

    def test_seed_changes_bytes(self, tmp_path):
        base = dict(doc_count=80, vocab_size=200, n_queries=6,
                    relevant_per_query=4)
        generate_synthetic(SynthSpec(seed=1, **base), tmp_path / "a")
        generate_synthetic(SynthSpec(seed=2, **base), tmp_path / "b")
        da, db = _tree_digests(tmp_path / "a"), _tree_digests(tmp_path / "b")
        assert da["corpus.jsonl"] != db["corpus.jsonl"]
        assert da["docs.dvec"] != db["docs.dvec"]


@pytest.fixture(scope="module")
def ds(tmp_path_factory):
    spec = SynthSpec(seed=3, doc_count=120, vocab_size=300,
                     n_queries=8, relevant_per_query=6)
    return generate_synthetic(spec, tmp_path_factory.mktemp("structure"))


class TestStructure:
    def test_qrels_disjoint_and_graded(self, ds):
        seen = set()
        for qid, rels in ds.qrels.items():
            docs = set(rels)
            assert len(rels) == ds.spec.relevant_per_query
            assert not docs & seen
            seen |= docs
            grades = sorted(rels.values())
            assert set(grades) <= {1, 2}
            assert grades.count(2) == max(1, ds.spec.relevant_per_query // 3)

    def test_qrels_file_round_trip(self, ds):
        assert read_qrels(ds.paths["qrels"]) == ds.qrels

    def test_manifest_matches_corpus(self, ds):
        assert ds.manifest.doc_count == ds.spec.doc_count
        assert ds.manifest.external_ids[0] == "doc0"
        with open(ds.paths["corpus"], encoding="utf-8") as fh:
            lines = [json.loads(l) for l in fh]
        assert [r["id"] for r in lines] == list(ds.manifest.external_ids)
        # manifest doc_lens reflect the actual token counts
        assert ds.manifest.doc_lens[3] == len(lines[3]["text"].split())

    def test_representation_shapes(self, ds):
        spec = ds.spec
        assert len(read_svec(ds.paths["svec"]["docs"])) == spec.doc_count
        assert len(read_svec(ds.paths["svec"]["queries"])) == spec.n_queries
        dense = read_dvec(ds.paths["dvec"]["docs"])
        assert dense.shape == (spec.doc_count, spec.dense_dim)
        qd = read_dvec(ds.paths["dvec"]["queries"])
        assert qd.shape == (spec.n_queries, spec.dense_dim)
        tensors = read_tvec(ds.paths["tvec"]["docs"])
        assert len(tensors) == spec.doc_count
        lo, hi = spec.tensor_tokens_per_doc
        for t in tensors[:20]:
            assert t.shape[1] == spec.tensor_dim
            assert lo <= t.shape[0] <= hi

    def test_vectors_are_unit_norm(self, ds):
        dense = read_dvec(ds.paths["dvec"]["docs"])
        np.testing.assert_allclose(
            np.linalg.norm(dense, axis=1), 1.0, atol=1e-5
        )

    def test_spec_json_round_trip(self, ds):
        with open(os.path.join(ds.out_dir, "synth.json"),
                  encoding="utf-8") as fh:
            raw = json.load(fh)
        raw["tokens_per_doc"] = tuple(raw["tokens_per_doc"])
        raw["tensor_tokens_per_doc"] = tuple(raw["tensor_tokens_per_doc"])
        assert SynthSpec(**raw) == ds.spec


def _single_path_ndcg(handle, ds, payloads, path):
    fusion = FusionConfig(method="rrf", k0=50, k=10)
    values = []
    for p in payloads:
        spec = QuerySpec(paths=(path,), fusion=fusion, **p)
        result = execute(handle, spec)
        ranking = result.external_ids(handle.manifest)
        values.append(ndcg_at_k(ranking, ds.qrels[p["qid"]], k=10))
    return mean_ndcg(values)


class TestPlantedSignal:
    @pytest.mark.parametrize("path", ["fts", "svs", "dvs", "tens"])
    def test_clean_single_path_quality(self, small_engine, path):
        handle, ds, payloads = small_engine
        score = _single_path_ndcg(handle, ds, payloads, path)
        assert score >= 0.7, f"{path} nDCG {score:.3f}"

    def test_noise_path_breaks_only_that_path(self, tmp_path):
        spec = SynthSpec(seed=5, doc_count=300, vocab_size=500,
                         n_queries=12, relevant_per_query=5,
                         noise_path="dvs")
        ds = generate_synthetic(spec, tmp_path)
        vectors = read_dvec(ds.paths["dvec"]["docs"])
        est = DenseVectorSearch(seed=3).fit(vectors,
                                            ds.manifest.fingerprint())
        queries = read_dvec(ds.paths["dvec"]["queries"])
        values = []
        for q in range(spec.n_queries):
            ranked = est.search(queries[q], k=10)
            ranking = [ds.manifest.external_ids[h.doc] for h in ranked.hits]
            values.append(ndcg_at_k(ranking, ds.qrels[f"q{q}"], k=10))
        assert mean_ndcg(values) <= 0.2
