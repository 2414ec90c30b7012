"""Closed-loop benchmark harness over path combinations and fusion
methods.

One measurement phase per report row supplies every workload number: a
pool of ``bench.threads`` workers drains the full query list
``repetitions`` times after a discarded warmup, so latency percentiles
and QPS describe the same run and qps * mean_latency / threads stays
near 1 by construction.  Ranking quality comes from the first
repetition; retrieval is deterministic, and the harness cross-checks
that every repetition reproduced it bit for bit.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import subprocess
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import psutil

from .engine import (
    INDEX_FILES,
    EngineConfig,
    QuerySpec,
    build_engine,
    execute,
    save_indexes,
)
from .fusion import FusionConfig
from .io import load_queries, read_dvec, read_qrels, read_svec, read_tvec
from .metrics import mean_ndcg, ndcg_at_k
from .synth import SynthSpec, generate_synthetic
from .text import tokenize
from .types import PathTag

PATH_SHORTS = ("fts", "svs", "dvs", "tens")


# ---------------------------------------------------------------------------
# Resource probe

class ResourceProbe:
    """Samples this process's resident set on a fixed cadence.

    The peak is the max over samples plus explicit samples at enter and
    exit, so spikes shorter than the interval can be missed; this is an
    approximation of a true high-water mark, not an allocator hook.
    """

    def __init__(self, interval_s: float = 0.01):
        self.interval_s = interval_s
        self._proc = psutil.Process()
        self._stop = threading.Event()
        self._thread = None
        self.baseline_bytes = 0
        self.peak_bytes = 0

    def sample(self) -> int:
        rss = self._proc.memory_info().rss
        if rss > self.peak_bytes:
            self.peak_bytes = rss
        return rss

    def _loop(self):
        while not self._stop.wait(self.interval_s):
            self.sample()

    def __enter__(self) -> "ResourceProbe":
        self.baseline_bytes = self._proc.memory_info().rss
        self.peak_bytes = self.baseline_bytes
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()
        self.sample()
        return False

    @property
    def delta_bytes(self) -> int:
        return self.peak_bytes - self.baseline_bytes


# ---------------------------------------------------------------------------
# Report rows

@dataclass
class BenchRow:
    combo: tuple
    fusion_method: str
    ndcg: float
    per_path_ndcg: dict
    latency_mean_ms: float
    latency_p50_ms: float
    latency_p95_ms: float
    latency_cv: float
    qps: float
    index_bytes: int
    build_peak_bytes: int
    query_peak_bytes: int
    little_law_ratio: float
    result_digest: str

    def validate(self):
        numeric = (
            self.ndcg, self.latency_mean_ms, self.latency_p50_ms,
            self.latency_p95_ms, self.qps, self.index_bytes,
            self.build_peak_bytes, self.query_peak_bytes,
        )
        if any(v < 0 for v in numeric):
            raise ValueError(f"negative metric in row {self.combo}")
        if self.latency_p50_ms > self.latency_p95_ms + 1e-9:
            raise ValueError("p50 exceeds p95")
        if not 0.5 <= self.little_law_ratio <= 2.0:
            raise ValueError(
                f"throughput/latency inconsistency: qps*latency/threads = "
                f"{self.little_law_ratio:.3f}"
            )


@dataclass
class BenchReport:
    rows: list
    k: int
    threads: int
    repetitions: int
    warmup_queries: int
    n_queries: int
    meta: dict = field(default_factory=dict)

    def validate(self):
        for row in self.rows:
            row.validate()

    def row(self, combo, fusion_method) -> BenchRow:
        combo = tuple(combo)
        for r in self.rows:
            if r.combo == combo and r.fusion_method == fusion_method:
                return r
        raise KeyError(f"no row for {combo} / {fusion_method}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for row in d["rows"]:
            row["combo"] = list(row["combo"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        rows = [BenchRow(**{**r, "combo": tuple(r["combo"])})
                for r in d["rows"]]
        return cls(rows=rows, **{k: v for k, v in d.items() if k != "rows"})

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "BenchReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


_CSV_COLUMNS = (
    "combo", "fusion", "ndcg", "latency_mean_ms", "latency_p50_ms",
    "latency_p95_ms", "latency_cv", "qps", "index_bytes",
    "build_peak_bytes", "query_peak_bytes",
    "ndcg_fts", "ndcg_svs", "ndcg_dvs", "ndcg_tens",
)


def _row_cells(row: BenchRow) -> list:
    cells = [
        "+".join(row.combo),
        row.fusion_method,
        f"{row.ndcg:.4f}",
        f"{row.latency_mean_ms:.3f}",
        f"{row.latency_p50_ms:.3f}",
        f"{row.latency_p95_ms:.3f}",
        f"{row.latency_cv:.3f}",
        f"{row.qps:.2f}",
        str(row.index_bytes),
        str(row.build_peak_bytes),
        str(row.query_peak_bytes),
    ]
    for path in PATH_SHORTS:
        v = row.per_path_ndcg.get(path)
        cells.append("" if v is None else f"{v:.4f}")
    return cells


def report_csv(report: BenchReport) -> str:
    lines = [",".join(_CSV_COLUMNS)]
    for row in report.rows:
        lines.append(",".join(_row_cells(row)))
    return "\n".join(lines) + "\n"


def report_markdown(report: BenchReport) -> str:
    header = (
        f"k={report.k}, threads={report.threads}, "
        f"repetitions={report.repetitions}, "
        f"queries={report.n_queries} (+{report.warmup_queries} warmup)"
    )
    lines = [
        "# Benchmark report", "", header, "",
        "| " + " | ".join(_CSV_COLUMNS) + " |",
        "|" + "---|" * len(_CSV_COLUMNS),
    ]
    for row in report.rows:
        lines.append("| " + " | ".join(_row_cells(row)) + " |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Workload plumbing

def all_combinations(paradigms) -> list:
    order = {p: i for i, p in enumerate(PATH_SHORTS)}
    tags = sorted((PathTag(p).short for p in paradigms),
                  key=order.__getitem__)
    out = []
    for size in range(1, len(tags) + 1):
        out.extend(itertools.combinations(tags, size))
    return out


def load_query_payloads(config: EngineConfig) -> list:
    """Per-query keyword payloads for QuerySpec, with None for any
    representation the config does not provide."""
    queries = load_queries(config.paths["queries"])
    n = len(queries)

    def q_file(key):
        entry = config.paths.get(key)
        if isinstance(entry, dict):
            return entry.get("queries")
        return None

    sparse = read_svec(q_file("svec")) if q_file("svec") else [None] * n
    dense = read_dvec(q_file("dvec")) if q_file("dvec") else [None] * n
    tensors = read_tvec(q_file("tvec")) if q_file("tvec") else [None] * n
    if not (len(sparse) == len(dense) == len(tensors) == n):
        raise ValueError("query representation counts disagree")
    payloads = []
    for i, (qid, text) in enumerate(queries):
        payloads.append(dict(
            qid=qid,
            terms=tuple(tokenize(text)),
            sparse=sparse[i],
            dense=dense[i],
            tensor=tensors[i],
        ))
    return payloads


def _dir_bytes(path) -> int:
    total = 0
    for name in os.listdir(path):
        full = os.path.join(path, name)
        if os.path.isfile(full):
            total += os.path.getsize(full)
    return total


def _combo_index_bytes(index_dir, combo, handle) -> int:
    total = os.path.getsize(os.path.join(index_dir, "manifest.ids"))
    for short in combo:
        total += os.path.getsize(
            os.path.join(index_dir, INDEX_FILES[PathTag(short)])
        )
    if handle.store is not None and ("tens" in combo):
        total += os.path.getsize(handle.store.path)
        sidecar = handle.store.path + ".offsets"
        if os.path.exists(sidecar):
            total += os.path.getsize(sidecar)
    return total


def _ranking_digest(entries) -> str:
    h = hashlib.sha256()
    for qid, hits in entries:
        h.update(qid.encode())
        for doc, score in hits:
            h.update(f"|{doc}:{score!r}".encode())
        h.update(b";")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Runner

def _fusion_for(base: FusionConfig, method: str) -> FusionConfig:
    return FusionConfig(
        method=method, kappa=base.kappa, weights=base.weights,
        normalization=base.normalization, k0=base.k0, k=base.k,
    )


def _single_path_ndcg(handle, payloads, qrels, path, fusion) -> float:
    values = []
    for p in payloads:
        spec = QuerySpec(paths=(path,), fusion=fusion, **p)
        result = execute(handle, spec, n_workers=1)
        ranking = result.external_ids(handle.manifest)
        values.append(ndcg_at_k(ranking, qrels.get(p["qid"], {}),
                                k=fusion.k))
    score = mean_ndcg(values)
    return float("nan") if score is None else score


def _measure_row(handle, payloads, qrels, combo, fusion, *, threads,
                 repetitions, warmup, seed) -> dict:
    specs = [QuerySpec(paths=combo, fusion=fusion, **p) for p in payloads]
    n = len(specs)
    for i in range(min(warmup, n)):
        execute(handle, specs[i])

    rng = np.random.default_rng(seed)
    flat = [(rep, int(i)) for rep in range(repetitions)
            for i in rng.permutation(n)]
    lat_ms = np.empty(len(flat))
    rankings = [[None] * n for _ in range(repetitions)]

    def run_one(j):
        rep, i = flat[j]
        t0 = time.perf_counter()
        result = execute(handle, specs[i])
        dt_ms = (time.perf_counter() - t0) * 1e3
        hits = tuple((h.doc, h.score) for h in result.fused.hits)
        return j, rep, i, dt_ms, hits

    with ResourceProbe() as probe:
        t_start = time.perf_counter()
        if threads == 1:
            results = map(run_one, range(len(flat)))
            for j, rep, i, dt_ms, hits in results:
                lat_ms[j] = dt_ms
                rankings[rep][i] = hits
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for j, rep, i, dt_ms, hits in pool.map(
                        run_one, range(len(flat))):
                    lat_ms[j] = dt_ms
                    rankings[rep][i] = hits
        wall_s = time.perf_counter() - t_start

    digests = [
        _ranking_digest(
            (payloads[i]["qid"], rankings[rep][i]) for i in range(n)
        )
        for rep in range(repetitions)
    ]
    if len(set(digests)) != 1:
        raise RuntimeError(
            f"nondeterministic rankings across repetitions for {combo}"
        )

    values = []
    for i, p in enumerate(payloads):
        ranking = [handle.manifest.external_ids[doc]
                   for doc, _ in rankings[0][i]]
        values.append(ndcg_at_k(ranking, qrels.get(p["qid"], {}),
                                k=fusion.k))
    score = mean_ndcg(values)

    rep_means = lat_ms.reshape(repetitions, n).mean(axis=1)
    mean_ms = float(lat_ms.mean())
    qps = len(flat) / wall_s
    return dict(
        ndcg=float("nan") if score is None else float(score),
        latency_mean_ms=mean_ms,
        latency_p50_ms=float(np.percentile(lat_ms, 50)),
        latency_p95_ms=float(np.percentile(lat_ms, 95)),
        latency_cv=float(rep_means.std() / rep_means.mean()),
        qps=qps,
        query_peak_bytes=probe.peak_bytes,
        little_law_ratio=qps * (mean_ms / 1e3) / threads,
        result_digest=digests[0],
    )


def run_benchmark(config: EngineConfig) -> BenchReport:
    """Build the configured engine once, then measure every requested
    (combination, fusion method) pair on the query workload."""
    bench = dict(config.bench)
    threads = int(bench.get("threads", 1))
    repetitions = int(bench.get("repetitions", 3))
    warmup = int(bench.get("warmup_queries", 4))
    seed = int(bench.get("seed", 0))
    if threads < 1:
        raise ValueError("bench.threads must be positive")
    if repetitions < 3:
        raise ValueError("bench.repetitions must be at least 3")
    combos = bench.get("combinations")
    if combos is None:
        combos = all_combinations(config.paradigms)
    combos = [tuple(PathTag(p).short for p in c) for c in combos]
    for combo in combos:
        unknown = set(combo) - set(config.paradigms)
        if unknown:
            raise ValueError(
                f"combination {combo} uses unbuilt paths {sorted(unknown)}"
            )
    methods = bench.get("fusion_methods") or [config.fusion.method]

    index_dir = config.paths.get("index_dir")
    if index_dir is None:
        raise ValueError("config paths.index_dir is required")
    qrels_path = config.paths.get("qrels")
    if qrels_path is None:
        raise ValueError("config paths.qrels is required")

    with ResourceProbe() as build_probe:
        handle = build_engine(config)
        save_indexes(handle, index_dir)

    qrels = read_qrels(qrels_path)
    payloads = load_query_payloads(config)

    single = {}
    for path in sorted({p for combo in combos for p in combo},
                       key=PATH_SHORTS.index):
        single[path] = _single_path_ndcg(
            handle, payloads, qrels, path,
            _fusion_for(config.fusion, "rrf"),
        )

    rows = []
    for combo in combos:
        for method in methods:
            fusion = _fusion_for(config.fusion, method)
            measured = _measure_row(
                handle, payloads, qrels, combo, fusion,
                threads=threads, repetitions=repetitions,
                warmup=warmup, seed=seed,
            )
            rows.append(BenchRow(
                combo=combo,
                fusion_method=method,
                per_path_ndcg={p: single[p] for p in combo},
                index_bytes=_combo_index_bytes(index_dir, combo, handle),
                build_peak_bytes=build_probe.peak_bytes,
                **measured,
            ))
    handle.close()

    report = BenchReport(
        rows=rows, k=config.fusion.k, threads=threads,
        repetitions=repetitions, warmup_queries=warmup,
        n_queries=len(payloads),
        meta={"paradigms": list(config.paradigms),
              "fusion_methods": list(methods)},
    )
    report.validate()
    return report


def write_report_files(report: BenchReport, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    report.save(os.path.join(out_dir, "bench.json"))
    with open(os.path.join(out_dir, "report.csv"), "w",
              encoding="utf-8") as fh:
        fh.write(report_csv(report))
    with open(os.path.join(out_dir, "report.md"), "w",
              encoding="utf-8") as fh:
        fh.write(report_markdown(report))


# ---------------------------------------------------------------------------
# Fresh-process memory probe

def probe_memory(index_dir, paths, fusion_method, *, k=10, k0=100,
                 skip_queries=False) -> dict:
    """Measure load and query-phase resident memory in a fresh
    interpreter, so one configuration's allocations cannot shadow
    another's."""
    cmd = [
        sys.executable, "-m", "hybridsearch.memprobe", str(index_dir),
        "--paths", ",".join(paths), "--fusion", fusion_method,
        "--k", str(k), "--k0", str(k0),
    ]
    if skip_queries:
        cmd.append("--skip-queries")
    proc = subprocess.run(cmd, capture_output=True, text=True, check=False)
    if proc.returncode != 0:
        raise RuntimeError(
            f"memory probe failed ({proc.returncode}): {proc.stderr}"
        )
    return json.loads(proc.stdout)


# ---------------------------------------------------------------------------
# Scripted scenarios

def scenario_specs() -> dict:
    """Frozen dataset definitions behind each scripted scenario."""
    return {
        "weakest_link": SynthSpec(seed=11, noise_path="dvs"),
        "tradeoff_map": SynthSpec(seed=11, svs_jitter=0.35),
        "trf_vs_rrf": SynthSpec(
            seed=17, doc_count=10000, vocab_size=4000,
            dense_dim=64, tensor_dim=64,
            tensor_tokens_per_doc=(12, 24),
            dvs_noise=0.2, tens_noise=0.15,
        ),
    }


def _scenario_config(ds, index_dir, *, paradigms, fusion, bench,
                     tens=None, dvs=None) -> EngineConfig:
    paths = dict(ds.paths)
    paths["index_dir"] = str(index_dir)
    return EngineConfig(
        paths=paths, paradigms=paradigms, fusion=fusion,
        tens=tens or {}, dvs=dvs or {}, bench=bench,
    )


def _best_single(report: BenchReport) -> tuple:
    best_path, best = None, -1.0
    for row in report.rows:
        if len(row.combo) == 1 and row.fusion_method == "rrf":
            if row.ndcg > best:
                best_path, best = row.combo[0], row.ndcg
    return best_path, best


def _scenario_weakest_link(out_dir) -> dict:
    spec = scenario_specs()["weakest_link"]
    ds = generate_synthetic(spec, os.path.join(out_dir, "data"))
    config = _scenario_config(
        ds, os.path.join(out_dir, "index"),
        paradigms=("fts", "svs", "dvs", "tens"),
        fusion=FusionConfig(method="rrf", k0=100, k=10),
        tens={"n_centroids": 128, "seed": 3},
        dvs={"seed": 3},
        bench={
            "threads": 1, "repetitions": 3, "warmup_queries": 4,
            "seed": 0,
            "combinations": [
                ["fts"], ["svs"], ["dvs"], ["tens"],
                ["svs", "dvs"], ["fts", "svs", "dvs", "tens"],
            ],
            "fusion_methods": ["rrf"],
        },
    )
    report = run_benchmark(config)
    write_report_files(report, out_dir)

    best_path, best = _best_single(report)
    fused = report.row(("svs", "dvs"), "rrf").ndcg
    outcome = {
        "scenario": "weakest_link",
        "noise_path": "dvs",
        "best_single_path": best_path,
        "best_single_ndcg": best,
        "fused_combo": "svs+dvs",
        "fused_ndcg": fused,
        "margin": best - fused,
        "all_paths_ndcg": report.row(
            ("fts", "svs", "dvs", "tens"), "rrf").ndcg,
        "passed": best - fused >= 0.02,
    }
    return outcome


def _scenario_tradeoff_map(out_dir) -> dict:
    spec = scenario_specs()["tradeoff_map"]
    ds = generate_synthetic(spec, os.path.join(out_dir, "data"))
    config = _scenario_config(
        ds, os.path.join(out_dir, "index"),
        paradigms=("fts", "svs", "dvs", "tens"),
        fusion=FusionConfig(method="rrf", k0=100, k=10),
        tens={"n_centroids": 128, "seed": 3},
        dvs={"seed": 3},
        bench={
            "threads": 1, "repetitions": 3, "warmup_queries": 4,
            "seed": 0, "fusion_methods": ["rrf"],
        },
    )
    report = run_benchmark(config)
    write_report_files(report, out_dir)

    by_count = {}
    for row in report.rows:
        by_count.setdefault(len(row.combo), []).append(row.latency_mean_ms)
    count_mean_ms = {c: float(np.mean(v)) for c, v in by_count.items()}
    counts = sorted(count_mean_ms)
    monotone = all(
        count_mean_ms[b] >= 0.9 * count_mean_ms[a]
        for a, b in zip(counts, counts[1:])
    )
    lat_fts = report.row(("fts",), "rrf").latency_mean_ms
    lat_four = report.row(("fts", "svs", "dvs", "tens"),
                          "rrf").latency_mean_ms
    singles = {row.combo[0]: row.ndcg for row in report.rows
               if len(row.combo) == 1}
    triple = report.row(("fts", "svs", "dvs"), "rrf").ndcg
    outcome = {
        "scenario": "tradeoff_map",
        "latency_ms_by_path_count": count_mean_ms,
        "latency_monotone_within_10pct": monotone,
        "fts_latency_ms": lat_fts,
        "four_path_latency_ms": lat_four,
        "four_gt_fts": lat_four > lat_fts,
        "single_ndcg": singles,
        "triple_ndcg": triple,
        "triple_geq_singles": triple >= max(singles.values()),
        "passed": (monotone and lat_four > lat_fts
                   and triple >= max(singles.values())),
    }
    return outcome


def _scenario_trf_vs_rrf(out_dir) -> dict:
    spec = scenario_specs()["trf_vs_rrf"]
    ds = generate_synthetic(spec, os.path.join(out_dir, "data"))
    index_dir = os.path.join(out_dir, "index")
    config = _scenario_config(
        ds, index_dir,
        paradigms=("fts", "dvs", "tens"),
        fusion=FusionConfig(method="rrf", k0=100, k=10),
        tens={"n_centroids": 256, "seed": 3},
        dvs={"seed": 3},
        bench={
            "threads": 1, "repetitions": 3, "warmup_queries": 4,
            "seed": 0,
            "combinations": [
                ["fts"], ["dvs"], ["fts", "dvs"], ["fts", "dvs", "tens"],
            ],
            "fusion_methods": ["rrf", "trf"],
        },
    )
    report = run_benchmark(config)
    write_report_files(report, out_dir)

    ndcg_rrf = report.row(("fts", "dvs"), "rrf").ndcg
    ndcg_trf = report.row(("fts", "dvs"), "trf").ndcg
    probe_trf = probe_memory(index_dir, ("fts", "dvs"), "trf")
    probe_tens = probe_memory(index_dir, ("fts", "dvs", "tens"), "rrf")
    outcome = {
        "scenario": "trf_vs_rrf",
        "ndcg_rrf": ndcg_rrf,
        "ndcg_trf": ndcg_trf,
        "trf_geq_rrf": ndcg_trf >= ndcg_rrf,
        "trf_peak_delta_bytes": probe_trf["peak_delta"],
        "tens_peak_delta_bytes": probe_tens["peak_delta"],
        "trf_below_tens": probe_trf["peak_delta"] < probe_tens["peak_delta"],
        "probe_trf": probe_trf,
        "probe_tens": probe_tens,
        "passed": (ndcg_trf >= ndcg_rrf
                   and probe_trf["peak_delta"] < probe_tens["peak_delta"]),
    }
    return outcome


_SCENARIOS = {
    "weakest_link": _scenario_weakest_link,
    "tradeoff_map": _scenario_tradeoff_map,
    "trf_vs_rrf": _scenario_trf_vs_rrf,
}


def scenario(name, out_dir) -> dict:
    """Run one scripted experiment into out_dir; returns the outcome
    summary that is also written to scenario.json."""
    if name not in _SCENARIOS:
        raise ValueError(
            f"unknown scenario {name!r}; choose from {sorted(_SCENARIOS)}"
        )
    os.makedirs(out_dir, exist_ok=True)
    outcome = _SCENARIOS[name](str(out_dir))
    with open(os.path.join(out_dir, "scenario.json"), "w",
              encoding="utf-8") as fh:
        json.dump(outcome, fh, indent=2)
    return outcome
