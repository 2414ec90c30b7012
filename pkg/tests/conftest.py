"""Shared fixtures.  Expensive index builds are session-scoped."""

import numpy as np
import pytest

from hybridsearch.dvs import HnswParams, build_hnsw
from hybridsearch.engine import EngineConfig, QuerySpec, build_engine
from hybridsearch.fusion import FusionConfig
from hybridsearch.io import load_queries, read_dvec, read_svec, read_tvec
from hybridsearch.synth import SynthSpec, generate_synthetic
from hybridsearch.tens import TensorStore, build_emvb
from hybridsearch.text import tokenize


def unit_rows(rng, n, dim):
    x = rng.standard_normal((n, dim)).astype(np.float32)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x


def clustered_tensors(rng, n_docs, dim=32, n_topics=40, noise=0.35,
                      tokens_lo=4, tokens_hi=9):
    """Topic-anchored token tensors; returns (tensors, topic_of_doc, topics)."""
    topics = unit_rows(rng, n_topics, dim)
    tensors, topic_of = [], []
    for _ in range(n_docs):
        t = int(rng.integers(n_topics))
        n_tok = int(rng.integers(tokens_lo, tokens_hi))
        rows = topics[t] + noise * rng.standard_normal((n_tok, dim))
        rows = rows.astype(np.float32)
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        tensors.append(rows)
        topic_of.append(t)
    return tensors, topic_of, topics


@pytest.fixture(scope="session")
def dense_benchmark():
    """10k x 64-d unit vectors, 100 queries, and a built default graph."""
    rng = np.random.default_rng(2024)
    vectors = unit_rows(rng, 10_000, 64)
    queries = unit_rows(rng, 100, 64)
    index = build_hnsw(vectors, HnswParams(), seed=7)
    return vectors, queries, index


@pytest.fixture(scope="session")
def tensor_benchmark(tmp_path_factory):
    """1k-doc clustered tensor store with a compressed index over it."""
    rng = np.random.default_rng(4096)
    tensors, topic_of, topics = clustered_tensors(rng, 1000)
    path = tmp_path_factory.mktemp("tens") / "bench.tvec"
    store = TensorStore.create(path, tensors)
    index = build_emvb(store, n_subspaces=8, seed=11)
    queries = []
    for _ in range(50):
        t = int(rng.integers(topics.shape[0]))
        rows = topics[t] + 0.35 * rng.standard_normal((4, 32))
        rows = rows.astype(np.float32)
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        queries.append(rows)
    return store, index, queries


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """300-doc planted corpus with every representation file."""
    out = tmp_path_factory.mktemp("synth300")
    spec = SynthSpec(seed=5, doc_count=300, vocab_size=500, n_queries=12,
                     relevant_per_query=5)
    return generate_synthetic(spec, out)


@pytest.fixture(scope="session")
def trf_scenario(tmp_path_factory):
    """Frozen 10k-doc tensor experiment; several minutes, built once.

    Returns (outcome dict, scenario output directory)."""
    from hybridsearch.bench import scenario

    out_dir = tmp_path_factory.mktemp("trf_scenario")
    outcome = scenario("trf_vs_rrf", out_dir)
    return outcome, str(out_dir)


@pytest.fixture(scope="session")
def small_engine(small_synth):
    """Engine over the 300-doc corpus plus per-query payload specs."""
    ds = small_synth
    config = EngineConfig(
        paths=dict(ds.paths),
        paradigms=("fts", "svs", "dvs", "tens"),
        fusion=FusionConfig(method="rrf", k0=50, k=10),
        tens={"n_centroids": 64, "seed": 3},
        dvs={"seed": 3},
    )
    handle = build_engine(config)

    queries = load_queries(ds.paths["queries"])
    sparse = read_svec(ds.paths["svec"]["queries"])
    dense = read_dvec(ds.paths["dvec"]["queries"])
    tensors = read_tvec(ds.paths["tvec"]["queries"])
    payloads = []
    for i, (qid, text) in enumerate(queries):
        payloads.append(dict(
            qid=qid,
            terms=tuple(tokenize(text)),
            sparse=sparse[i],
            dense=dense[i],
            tensor=tensors[i],
        ))
    yield handle, ds, payloads
    handle.close()
