"""Command line front end.

Four subcommands cover the whole lifecycle: ``build`` materializes the
indexes a config describes, ``search`` replays a query file against
them, ``bench`` runs the measurement harness, and ``report`` renders a
saved benchmark as CSV or markdown.
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import (
    BenchReport,
    load_query_payloads,
    report_csv,
    report_markdown,
    run_benchmark,
    write_report_files,
)
from .engine import (
    EngineConfig,
    QuerySpec,
    build_engine,
    execute,
    load_indexes,
    save_indexes,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridsearch",
        description="hybrid search engine and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build indexes from a config file")
    p.add_argument("--config", required=True, help="engine config JSON")

    p = sub.add_parser("search", help="run queries against built indexes")
    p.add_argument("--config", required=True, help="engine config JSON")
    p.add_argument("--queries", required=True,
                   help="queries JSONL ({\"id\":…, \"text\":…} per line)")
    p.add_argument("--out", required=True,
                   help="output JSONL, one result object per query")

    p = sub.add_parser("bench", help="run the benchmark harness")
    p.add_argument("--config", required=True, help="engine config JSON")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("report", help="render a saved benchmark report")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="directory holding bench.json")
    p.add_argument("--format", required=True, choices=("csv", "md"))
    return parser


def _cmd_build(args) -> int:
    config = EngineConfig.load(args.config)
    index_dir = config.paths.get("index_dir")
    if index_dir is None:
        raise SystemExit("config paths.index_dir is required for build")
    handle = build_engine(config)
    save_indexes(handle, index_dir)
    handle.close()
    print(f"built {', '.join(config.paradigms)} -> {index_dir}")
    return 0


def _cmd_search(args) -> int:
    from .io import write_search_results

    config = EngineConfig.load(args.config)
    config.paths["queries"] = os.path.abspath(args.queries)
    index_dir = config.paths.get("index_dir")
    if index_dir is None:
        raise SystemExit("config paths.index_dir is required for search")
    handle = load_indexes(index_dir, config)
    payloads = load_query_payloads(config)
    paths = tuple(t.short for t in handle.loaded_paths)
    results = []
    for payload in payloads:
        spec = QuerySpec(paths=paths, fusion=config.fusion, **payload)
        result = execute(handle, spec)
        ext = result.external_ids(handle.manifest)
        results.append((payload["qid"],
                        [(doc, hit.score)
                         for doc, hit in zip(ext, result.fused.hits)]))
    handle.close()
    write_search_results(args.out, results)
    print(f"wrote {len(results)} results -> {args.out}")
    return 0


def _cmd_bench(args) -> int:
    config = EngineConfig.load(args.config)
    report = run_benchmark(config)
    write_report_files(report, args.out)
    print(f"wrote {len(report.rows)} rows -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    report = BenchReport.load(os.path.join(args.in_dir, "bench.json"))
    if args.format == "csv":
        sys.stdout.write(report_csv(report))
    else:
        sys.stdout.write(report_markdown(report))
    return 0


_COMMANDS = {
    "build": _cmd_build,
    "search": _cmd_search,
    "bench": _cmd_bench,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
