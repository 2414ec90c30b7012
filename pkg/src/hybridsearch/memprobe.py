"""Resident-memory probe that runs in its own interpreter.

Loads saved indexes for a subset of paths, optionally replays the
configured query workload, and prints one JSON object with RSS
checkpoints.  Running each configuration in a fresh process keeps one
run's allocations from shadowing another's, which in-process sampling
cannot guarantee.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .bench import ResourceProbe, load_query_payloads
from .engine import INDEX_FILES, EngineConfig, QuerySpec, execute, load_indexes
from .fusion import FusionConfig
from .types import PathTag


def _loaded_disk_bytes(index_dir, handle) -> int:
    total = os.path.getsize(os.path.join(index_dir, "manifest.ids"))
    for tag in handle.searchers:
        total += os.path.getsize(os.path.join(index_dir, INDEX_FILES[tag]))
    if handle.store is not None:
        total += os.path.getsize(handle.store.path)
        sidecar = handle.store.path + ".offsets"
        if os.path.exists(sidecar):
            total += os.path.getsize(sidecar)
    return total


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hybridsearch.memprobe")
    ap.add_argument("index_dir")
    ap.add_argument("--paths", default=None,
                    help="comma-separated path subset, default: all built")
    ap.add_argument("--fusion", default=None,
                    help="fusion method override")
    ap.add_argument("--k", type=int, default=None)
    ap.add_argument("--k0", type=int, default=None)
    ap.add_argument("--skip-queries", action="store_true")
    ap.add_argument("--interval-ms", type=float, default=10.0)
    args = ap.parse_args(argv)

    with open(os.path.join(args.index_dir, "engine.json"),
              encoding="utf-8") as fh:
        meta = json.load(fh)
    saved = meta["config"]
    fusion_kwargs = dict(saved.get("fusion", {}))
    if args.fusion:
        fusion_kwargs["method"] = args.fusion
    if args.k is not None:
        fusion_kwargs["k"] = args.k
    if args.k0 is not None:
        fusion_kwargs["k0"] = args.k0
    saved["fusion"] = FusionConfig.from_dict(fusion_kwargs)
    if args.paths:
        saved["paradigms"] = tuple(args.paths.split(","))
    config = EngineConfig(**saved)

    probe = ResourceProbe(interval_s=args.interval_ms / 1e3)
    with probe:
        rss_start = probe.baseline_bytes
        handle = load_indexes(args.index_dir, config)
        rss_after_load = probe.sample()
        disk_bytes = _loaded_disk_bytes(args.index_dir, handle)
        n_queries = 0
        if not args.skip_queries:
            paths = tuple(t.short for t in handle.loaded_paths)
            for payload in load_query_payloads(config):
                spec = QuerySpec(paths=paths, fusion=config.fusion,
                                 **payload)
                execute(handle, spec, n_workers=1)
                n_queries += 1
        handle.close()

    print(json.dumps({
        "rss_start": rss_start,
        "rss_after_load": rss_after_load,
        "rss_peak": probe.peak_bytes,
        "load_delta": rss_after_load - rss_start,
        "peak_delta": probe.peak_bytes - rss_start,
        "disk_bytes": disk_bytes,
        "n_queries": n_queries,
        "paths": list(config.paradigms),
        "fusion": config.fusion.method,
    }))
    return 0


if __name__ == "__main__":
    sys.exit(main())
