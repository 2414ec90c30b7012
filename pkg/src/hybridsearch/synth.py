"""Deterministic synthetic corpora with planted relevance.

Every query gets a disjoint set of relevant documents and a planted
signal per retrieval path: a shared rare term (lexical and sparse), a
nearby dense vector, and overlapping token embeddings.  Grade-2 docs
get a stronger signal than grade-1 so the ideal ordering is learnable.
Setting noise_path replaces that path's representations with draws
independent of relevance, which pins its ranking quality near chance.

All randomness flows from one seeded generator in a fixed order, so the
same spec always produces byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .io import write_dvec, write_jsonl, write_qrels, write_svec, write_tvec
from .types import CorpusManifest, SparseVector

N_TENSOR_ANCHORS = 3


@dataclass
class SynthSpec:
    seed: int = 0
    doc_count: int = 1000
    vocab_size: int = 2000
    zipf_exponent: float = 1.3
    dense_dim: int = 32
    tensor_dim: int = 32
    tokens_per_doc: tuple = (20, 60)
    tensor_tokens_per_doc: tuple = (5, 10)
    n_queries: int = 50
    relevant_per_query: int = 10
    noise_path: str = None
    # planting knobs, tuned once against the path oracles then frozen
    fts_extra_tf: int = 2          # needle repetitions beyond the grade
    svs_jitter: float = 0.0        # lognormal sigma on doc needle weights
    dvs_noise: float = 0.12
    tens_noise: float = 0.30

    def __post_init__(self):
        if self.doc_count < 1 or self.n_queries < 1:
            raise ValueError("doc_count and n_queries must be positive")
        if self.relevant_per_query < 1:
            raise ValueError("relevant_per_query must be positive")
        if self.relevant_per_query * self.n_queries > self.doc_count:
            raise ValueError(
                "not enough docs for disjoint relevant sets: need "
                f"{self.relevant_per_query * self.n_queries}, have "
                f"{self.doc_count}"
            )
        if self.vocab_size < 10:
            raise ValueError("vocab_size must be at least 10")
        lo, hi = self.tokens_per_doc
        if lo < 1 or hi < lo:
            raise ValueError(f"bad tokens_per_doc range ({lo}, {hi})")
        lo, hi = self.tensor_tokens_per_doc
        if lo < N_TENSOR_ANCHORS + 1 or hi < lo:
            raise ValueError(
                f"tensor_tokens_per_doc must start at "
                f"{N_TENSOR_ANCHORS + 1}, got ({lo}, {hi})"
            )
        if self.svs_jitter < 0 or self.dvs_noise < 0 or self.tens_noise < 0:
            raise ValueError("planting noise knobs must be non-negative")
        if self.noise_path is not None:
            if self.noise_path not in ("fts", "svs", "dvs", "tens"):
                raise ValueError(f"unknown noise_path {self.noise_path!r}")


@dataclass
class SynthDataset:
    """File locations plus the in-memory ground truth."""

    out_dir: str
    paths: dict
    qrels: dict
    manifest: CorpusManifest
    spec: SynthSpec = field(repr=False, default=None)


def _unit(rows):
    return rows / np.linalg.norm(rows, axis=-1, keepdims=True)


def _zipf_probs(vocab_size, exponent):
    ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
    p = ranks ** -exponent
    return p / p.sum()


def generate_synthetic(spec: SynthSpec, out_dir) -> SynthDataset:
    rng = np.random.default_rng(spec.seed)
    os.makedirs(out_dir, exist_ok=True)
    n_docs, n_queries = spec.doc_count, spec.n_queries

    # -- relevance assignment: disjoint blocks of a seeded permutation
    perm = rng.permutation(n_docs)
    rel_docs = {}            # query -> list of (ordinal, grade)
    grades = np.ones(spec.relevant_per_query, dtype=np.int64)
    grades[: max(1, spec.relevant_per_query // 3)] = 2
    for q in range(n_queries):
        lo = q * spec.relevant_per_query
        block = perm[lo: lo + spec.relevant_per_query]
        rel_docs[q] = [(int(d), int(g)) for d, g in zip(block, grades)]
    grade_of = {}
    query_of = {}
    for q, pairs in rel_docs.items():
        for doc, grade in pairs:
            grade_of[doc] = grade
            query_of[doc] = q

    # -- corpus text: Zipf background plus planted needle terms
    probs = _zipf_probs(spec.vocab_size, spec.zipf_exponent)
    lo, hi = spec.tokens_per_doc
    doc_tokens = []
    for doc in range(n_docs):
        length = int(rng.integers(lo, hi + 1))
        tokens = [f"w{t}" for t in rng.choice(spec.vocab_size, size=length,
                                              p=probs)]
        if spec.noise_path != "fts" and doc in query_of:
            reps = spec.fts_extra_tf + grade_of[doc]
            tokens.extend([f"needle{query_of[doc]}"] * reps)
        doc_tokens.append(tokens)

    corpus_records = [
        (f"doc{d}", " ".join(doc_tokens[d])) for d in range(n_docs)
    ]
    paths = {"corpus": os.path.join(out_dir, "corpus.jsonl")}
    write_jsonl(paths["corpus"], corpus_records)

    # -- queries: needle plus one background term to exercise multi-term
    query_tokens = []
    for q in range(n_queries):
        extra = f"w{int(rng.choice(spec.vocab_size, p=probs))}"
        if spec.noise_path == "fts":
            terms = [f"w{t}" for t in rng.choice(spec.vocab_size, size=3,
                                                 p=probs)]
        else:
            terms = [f"needle{q}", extra]
        query_tokens.append(terms)
    paths["queries"] = os.path.join(out_dir, "queries.jsonl")
    write_jsonl(paths["queries"], [
        (f"q{q}", " ".join(query_tokens[q])) for q in range(n_queries)
    ])

    qrels = {
        f"q{q}": {f"doc{d}": g for d, g in rel_docs[q]}
        for q in range(n_queries)
    }
    paths["qrels"] = os.path.join(out_dir, "qrels.txt")
    write_qrels(paths["qrels"], qrels)

    # -- sparse vectors: tf-idf over the generated text
    doc_svecs, query_svecs = _sparse_vectors(
        spec, rng, doc_tokens, query_tokens
    )
    paths["svec"] = {"docs": os.path.join(out_dir, "docs.svec"),
                     "queries": os.path.join(out_dir, "queries.svec")}
    write_svec(paths["svec"]["docs"], doc_svecs)
    write_svec(paths["svec"]["queries"], query_svecs)

    # -- dense vectors: per-query anchors, graded noise
    anchors = _unit(rng.standard_normal((n_queries, spec.dense_dim)))
    doc_dense = _unit(rng.standard_normal((n_docs, spec.dense_dim)))
    if spec.noise_path != "dvs":
        for doc, q in query_of.items():
            shrink = 0.7 if grade_of[doc] == 2 else 1.0
            noise = rng.standard_normal(spec.dense_dim)
            doc_dense[doc] = _unit(
                anchors[q] + spec.dvs_noise * shrink * noise
            )
        query_dense = _unit(
            anchors + 0.05 * rng.standard_normal(anchors.shape)
        )
    else:
        query_dense = _unit(
            rng.standard_normal((n_queries, spec.dense_dim))
        )
    paths["dvec"] = {"docs": os.path.join(out_dir, "docs.dvec"),
                     "queries": os.path.join(out_dir, "queries.dvec")}
    write_dvec(paths["dvec"]["docs"], doc_dense.astype(np.float32))
    write_dvec(paths["dvec"]["queries"], query_dense.astype(np.float32))

    # -- token tensors: anchor tokens shared between query and relevant
    tanchors = _unit(rng.standard_normal(
        (n_queries, N_TENSOR_ANCHORS, spec.tensor_dim)
    ))
    tlo, thi = spec.tensor_tokens_per_doc
    doc_tensors = []
    for doc in range(n_docs):
        n_tok = int(rng.integers(tlo, thi + 1))
        rows = _unit(rng.standard_normal((n_tok, spec.tensor_dim)))
        if spec.noise_path != "tens" and doc in query_of:
            q = query_of[doc]
            shrink = 0.7 if grade_of[doc] == 2 else 1.0
            noise = rng.standard_normal(tanchors[q].shape)
            rows[:N_TENSOR_ANCHORS] = _unit(
                tanchors[q] + spec.tens_noise * shrink * noise
            )
        doc_tensors.append(rows.astype(np.float32))
    if spec.noise_path == "tens":
        query_tensors = [
            _unit(rng.standard_normal(
                (N_TENSOR_ANCHORS, spec.tensor_dim)
            )).astype(np.float32)
            for _ in range(n_queries)
        ]
    else:
        query_tensors = [
            _unit(tanchors[q] + 0.05 * rng.standard_normal(
                tanchors[q].shape
            )).astype(np.float32)
            for q in range(n_queries)
        ]
    paths["tvec"] = {"docs": os.path.join(out_dir, "docs.tvec"),
                     "queries": os.path.join(out_dir, "queries.tvec")}
    write_tvec(paths["tvec"]["docs"], doc_tensors, dim=spec.tensor_dim)
    write_tvec(paths["tvec"]["queries"], query_tensors,
               dim=spec.tensor_dim)

    with open(os.path.join(out_dir, "synth.json"), "w",
              encoding="utf-8") as fh:
        json.dump(asdict(spec), fh, indent=2)

    manifest = CorpusManifest(
        tuple(r[0] for r in corpus_records),
        tuple(len(t) for t in doc_tokens),
    )
    return SynthDataset(str(out_dir), paths, qrels, manifest, spec)


def _sparse_vectors(spec, rng, doc_tokens, query_tokens):
    """tf-idf weights over a stable term-id mapping.

    Background term w<i> maps to id i; needle terms sit past the vocab.
    In svs noise mode both sides are replaced with random draws.
    """
    if spec.noise_path == "svs":
        n_terms = spec.vocab_size
        docs = [
            SparseVector.from_dict({
                int(t): float(w)
                for t, w in zip(
                    rng.choice(n_terms, size=10, replace=False),
                    rng.random(10) + 0.1,
                )
            })
            for _ in doc_tokens
        ]
        queries = [
            SparseVector.from_dict({
                int(t): float(w)
                for t, w in zip(
                    rng.choice(n_terms, size=5, replace=False),
                    rng.random(5) + 0.1,
                )
            })
            for _ in query_tokens
        ]
        return docs, queries

    def term_id(tok):
        if tok.startswith("needle"):
            return spec.vocab_size + int(tok[len("needle"):])
        return int(tok[1:])

    n_docs = len(doc_tokens)
    df = {}
    doc_tfs = []
    for tokens in doc_tokens:
        tf = {}
        for tok in tokens:
            tf[term_id(tok)] = tf.get(term_id(tok), 0) + 1
        doc_tfs.append(tf)
        for t in tf:
            df[t] = df.get(t, 0) + 1

    def idf(t):
        return float(np.log1p(n_docs / df.get(t, 1)))

    def doc_weight(t, c):
        w = c * idf(t)
        # jitter only the planted needle weights; zero sigma must not
        # consume any rng draws so existing seeds stay byte-stable
        if spec.svs_jitter > 0 and t >= spec.vocab_size:
            w *= float(np.exp(spec.svs_jitter * rng.standard_normal()))
        return w

    docs = [
        SparseVector.from_dict({t: doc_weight(t, c) for t, c in tf.items()})
        for tf in doc_tfs
    ]
    queries = []
    for tokens in query_tokens:
        tf = {}
        for tok in tokens:
            tf[term_id(tok)] = tf.get(term_id(tok), 0) + 1
        queries.append(SparseVector.from_dict(
            {t: c * idf(t) for t, c in tf.items()}
        ))
    return docs, queries
