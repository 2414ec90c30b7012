"""Query orchestration over the four retrieval paths.

A query spec compiles into a small DAG: one scan node per enabled path
feeding a single fusion sink.  Execution is push-based: scans run on a
worker pool and each completion pushes its ranked list into the sink;
the sink fires once every input has arrived.  Scan results are fused in
canonical path order, so the final list is identical for any worker
count.
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dvs import DenseVectorSearch, HnswParams
from .errors import (
    IndexCorpusMismatchError,
    PathExecutionError,
    PlanError,
)
from .fts import FullTextSearch
from .fusion import FusionConfig, fuse
from .io import (
    load_corpus,
    read_dvec,
    read_manifest_ids,
    read_svec,
    write_manifest_ids,
)
from .svs import SparseVectorSearch
from .tens import TensorSearch, TensorStore
from .text import tokenize
from .types import CorpusManifest, PathTag, RankedList, SparseVector

PATH_ORDER = (PathTag.FTS, PathTag.SVS, PathTag.DVS, PathTag.TENS)

INDEX_FILES = {
    PathTag.FTS: "fts.ftsidx",
    PathTag.SVS: "svs.svsidx",
    PathTag.DVS: "dvs.dvsidx",
    PathTag.TENS: "tens.emvb",
}


# ---------------------------------------------------------------------------
# Configuration

@dataclass
class EngineConfig:
    """Deserialized engine config file.

    Representation path entries (dvec/svec/tvec) are {"docs": ...,
    "queries": ...} pairs; relative paths resolve against the config
    file's directory.
    """

    paths: dict = field(default_factory=dict)
    paradigms: tuple = ("fts", "svs", "dvs", "tens")
    fusion: FusionConfig = field(default_factory=FusionConfig)
    dvs: dict = field(default_factory=dict)
    svs: dict = field(default_factory=dict)
    tens: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)

    def __post_init__(self):
        tags = tuple(PathTag(p) for p in self.paradigms)
        if not tags:
            raise ValueError("at least one paradigm required")
        if len(set(tags)) != len(tags):
            raise ValueError("duplicate paradigms")
        for tag in tags:
            if tag is PathTag.FUSED:
                raise ValueError("fused is not a retrieval paradigm")
        self.paradigms = tuple(t.short for t in tags)

    @property
    def enabled_paths(self) -> tuple:
        return tuple(PathTag(p) for p in self.paradigms)

    @classmethod
    def load(cls, path) -> "EngineConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        known = {"paths", "paradigms", "fusion", "dvs", "svs", "tens",
                 "bench"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "fusion" in kwargs:
            kwargs["fusion"] = FusionConfig.from_dict(kwargs["fusion"])
        if "paradigms" in kwargs:
            kwargs["paradigms"] = tuple(kwargs["paradigms"])
        cfg = cls(**kwargs)
        cfg.paths = _resolve_paths(cfg.paths, os.path.dirname(
            os.path.abspath(path)
        ))
        return cfg

    def to_dict(self) -> dict:
        return {
            "paths": self.paths,
            "paradigms": list(self.paradigms),
            "fusion": self.fusion.to_dict(),
            "dvs": self.dvs, "svs": self.svs, "tens": self.tens,
            "bench": self.bench,
        }


def _resolve_paths(paths, base):
    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    out = {}
    for key, value in paths.items():
        if isinstance(value, dict):
            out[key] = {k: resolve(v) for k, v in value.items()}
        else:
            out[key] = resolve(value)
    return out


def _rep_path(config, key, which):
    entry = config.paths.get(key)
    if entry is None:
        raise ValueError(f"config paths.{key} is required")
    if isinstance(entry, dict):
        if which not in entry:
            raise ValueError(f"config paths.{key}.{which} is required")
        return entry[which]
    return entry  # bare path means docs-only


# ---------------------------------------------------------------------------
# Query spec and plan

@dataclass
class QuerySpec:
    """One hybrid query: payloads for each enabled path plus fusion
    settings."""

    paths: tuple
    fusion: FusionConfig = field(default_factory=FusionConfig)
    qid: str = ""
    terms: tuple = None           # FTS
    sparse: SparseVector = None   # SVS
    dense: np.ndarray = None      # DVS
    tensor: np.ndarray = None     # TENS; also TRF's query payload

    def __post_init__(self):
        self.paths = tuple(PathTag(p) for p in self.paths)
        if not self.paths:
            raise PlanError("no paths enabled")
        if len(set(self.paths)) != len(self.paths):
            raise PlanError("duplicate paths in spec")
        order = {tag: i for i, tag in enumerate(PATH_ORDER)}
        self.paths = tuple(sorted(self.paths, key=order.__getitem__))

    def payload_for(self, tag: PathTag):
        return {
            PathTag.FTS: self.terms,
            PathTag.SVS: self.sparse,
            PathTag.DVS: self.dense,
            PathTag.TENS: self.tensor,
        }[tag]


@dataclass(frozen=True)
class PlanNode:
    kind: str                 # "scan" or "fusion"
    path: PathTag = None      # scans only
    method: str = None        # fusion only
    needs_tensor_store: bool = False


@dataclass(frozen=True)
class QueryPlan:
    nodes: tuple
    edges: tuple              # (source node idx, sink node idx)

    @property
    def scan_nodes(self):
        return tuple(n for n in self.nodes if n.kind == "scan")

    @property
    def sink(self):
        return self.nodes[-1]


def plan(spec: QuerySpec) -> QueryPlan:
    """Compile a spec into scan nodes plus one fusion sink."""
    for tag in spec.paths:
        if spec.payload_for(tag) is None:
            raise PlanError(f"missing query payload for path {tag.short}")
    method = spec.fusion.method
    if method == "trf" and spec.tensor is None:
        raise PlanError("trf fusion requires a query tensor payload")

    scans = tuple(PlanNode("scan", path=tag) for tag in spec.paths)
    sink = PlanNode("fusion", method=method,
                    needs_tensor_store=(method == "trf"))
    nodes = scans + (sink,)
    edges = tuple((i, len(nodes) - 1) for i in range(len(scans)))
    return QueryPlan(nodes, edges)


def validate_plan(p: QueryPlan):
    """Structural invariants: single sink, acyclic (edges all point at
    the sink), in-degree equals the scan count."""
    sink_idx = len(p.nodes) - 1
    if p.nodes[sink_idx].kind != "fusion":
        raise PlanError("plan must end in a fusion sink")
    if sum(1 for n in p.nodes if n.kind == "fusion") != 1:
        raise PlanError("plan must have exactly one fusion node")
    for src, dst in p.edges:
        if dst != sink_idx or not 0 <= src < sink_idx:
            raise PlanError("edges must go scan -> sink")
    if len({src for src, _ in p.edges}) != len(p.scan_nodes):
        raise PlanError("fusion in-degree must equal the scan count")


# ---------------------------------------------------------------------------
# Engine handle

class EngineHandle:
    """Loaded per-path indexes over one corpus; read-only at query time."""

    def __init__(self, manifest: CorpusManifest, config: EngineConfig,
                 searchers: dict, store: TensorStore = None):
        self.manifest = manifest
        self.config = config
        self.searchers = searchers
        self.store = store

    @property
    def loaded_paths(self) -> tuple:
        return tuple(t for t in PATH_ORDER if t in self.searchers)

    def close(self):
        if self.store is not None:
            self.store.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def build_engine(config: EngineConfig) -> EngineHandle:
    """Build every enabled path's index from the configured inputs."""
    corpus = load_corpus(config.paths["corpus"])
    manifest = corpus.manifest
    fp = manifest.fingerprint()
    searchers = {}
    store = None

    for tag in config.enabled_paths:
        if tag is PathTag.FTS:
            est = FullTextSearch()
            est.fit(corpus=corpus)
        elif tag is PathTag.SVS:
            vectors = read_svec(_rep_path(config, "svec", "docs"))
            est = SparseVectorSearch(**config.svs)
            est.fit(vectors, fingerprint=fp)
        elif tag is PathTag.DVS:
            vectors = read_dvec(_rep_path(config, "dvec", "docs"))
            est = DenseVectorSearch(**config.dvs)
            est.fit(vectors, fingerprint=fp)
        else:
            store = TensorStore.open(_rep_path(config, "tvec", "docs"))
            est = TensorSearch(**_tens_build_params(config.tens))
            est.fit(store, fingerprint=fp)
        searchers[tag] = est

    if store is None and _wants_tensor_store(config):
        store = TensorStore.open(_rep_path(config, "tvec", "docs"))
    return EngineHandle(manifest, config, searchers, store)


def _tens_build_params(tens_cfg):
    params = dict(tens_cfg)
    params.pop("n_probe_docs", None)  # query-time knob
    return params


def _wants_tensor_store(config) -> bool:
    if config.fusion.method == "trf":
        return True
    tvec = config.paths.get("tvec")
    return isinstance(tvec, dict) and "docs" in tvec


def save_indexes(handle: EngineHandle, index_dir):
    os.makedirs(index_dir, exist_ok=True)
    write_manifest_ids(os.path.join(index_dir, "manifest.ids"),
                       handle.manifest)
    for tag, est in handle.searchers.items():
        est.save(os.path.join(index_dir, INDEX_FILES[tag]))
    meta = {
        "paradigms": list(t.short for t in handle.loaded_paths),
        "config": handle.config.to_dict(),
    }
    with open(os.path.join(index_dir, "engine.json"), "w",
              encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)


def load_indexes(index_dir, config: EngineConfig = None) -> EngineHandle:
    """Open saved indexes; every fingerprint must match the manifest."""
    with open(os.path.join(index_dir, "engine.json"),
              encoding="utf-8") as fh:
        meta = json.load(fh)
    if config is None:
        saved = meta["config"]
        saved["fusion"] = FusionConfig.from_dict(saved.get("fusion", {}))
        config = EngineConfig(**saved)
    manifest = CorpusManifest.from_ids(
        read_manifest_ids(os.path.join(index_dir, "manifest.ids"))
    )

    built = list(meta["paradigms"])
    wanted = built if config is None else list(config.paradigms)
    missing = [n for n in wanted if n not in built]
    if missing:
        raise ValueError(f"indexes not built for: {missing}")

    searchers = {}
    store = None
    for name in wanted:
        tag = PathTag(name)
        path = os.path.join(index_dir, INDEX_FILES[tag])
        if tag is PathTag.FTS:
            searchers[tag] = FullTextSearch.load(path, manifest)
        elif tag is PathTag.SVS:
            searchers[tag] = SparseVectorSearch.load(path, manifest)
        elif tag is PathTag.DVS:
            searchers[tag] = DenseVectorSearch.load(path, manifest)
        else:
            store = TensorStore.open(_rep_path(config, "tvec", "docs"))
            searchers[tag] = TensorSearch.load(path, store, manifest)
    if store is None and _wants_tensor_store(config):
        store = TensorStore.open(_rep_path(config, "tvec", "docs"))
    if store is not None and store.count != manifest.doc_count:
        raise IndexCorpusMismatchError(
            f"tensor store holds {store.count} docs, manifest has "
            f"{manifest.doc_count}"
        )
    return EngineHandle(manifest, config, searchers, store)


# ---------------------------------------------------------------------------
# Execution

@dataclass
class ExecutionResult:
    fused: RankedList
    per_path: dict
    timings_ms: dict

    def external_ids(self, manifest: CorpusManifest):
        return [manifest.external_ids[h.doc] for h in self.fused.hits]


class _FusionSink:
    """Barrier join: collects one list per scan, fires on the last."""

    def __init__(self, expected):
        self.expected = set(expected)
        self.arrived = {}
        self.lock = threading.Lock()
        self.done = threading.Event()
        self.error = None

    def push(self, tag, result):
        with self.lock:
            self.arrived[tag] = result
            complete = set(self.arrived) == self.expected
        if complete:
            self.done.set()

    def fail(self, error):
        with self.lock:
            if self.error is None:
                self.error = error
        self.done.set()


def _run_scan(handle, spec, tag, k0):
    est = handle.searchers.get(tag)
    if est is None:
        raise PathExecutionError(tag.short,
                                 RuntimeError("path index not loaded"))
    payload = spec.payload_for(tag)
    try:
        if tag is PathTag.FTS:
            return est.search(list(payload), k=k0)
        return est.search(payload, k=k0)
    except Exception as exc:  # noqa: BLE001
        raise PathExecutionError(tag.short, exc) from exc


def execute(handle: EngineHandle, spec: QuerySpec, plan_: QueryPlan = None,
            n_workers: int = None) -> ExecutionResult:
    """Run the plan's scans on a pool, then fuse at the barrier.

    Single-path rrf/ws plans pass the scan list through unchanged
    (truncated to k); a rank transform of one list cannot reorder it.
    trf always re-scores.
    """
    if plan_ is None:
        plan_ = plan(spec)
    validate_plan(plan_)
    if n_workers is None:
        n_workers = min(len(plan_.scan_nodes), os.cpu_count() or 1)
    if n_workers < 1:
        raise ValueError("n_workers must be at least 1")

    k0 = spec.fusion.k0
    tags = tuple(node.path for node in plan_.scan_nodes)
    sink = _FusionSink(tags)
    timings = {}

    t_start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        for tag in tags:
            def scan(tag=tag):
                t0 = time.perf_counter()
                result = _run_scan(handle, spec, tag, k0)
                timings[tag.short] = (time.perf_counter() - t0) * 1e3
                return tag, result

            future = pool.submit(scan)

            def push(fut):
                err = fut.exception()
                if err is not None:
                    sink.fail(err)
                else:
                    sink.push(*fut.result())

            future.add_done_callback(push)
        sink.done.wait()
    if sink.error is not None:
        raise sink.error

    t_fuse = time.perf_counter()
    lists = [sink.arrived[tag] for tag in tags]  # canonical order
    fusion = spec.fusion
    if fusion.method != "trf" and len(lists) == 1:
        fused = lists[0].truncated(fusion.k)
    else:
        fused = fuse(lists, fusion, q_tensor=spec.tensor, store=handle.store)
    t_end = time.perf_counter()

    timings["fusion"] = (t_end - t_fuse) * 1e3
    timings["wall"] = (t_end - t_start) * 1e3
    per_path = {tag: sink.arrived[tag] for tag in tags}
    return ExecutionResult(fused, per_path, timings)
