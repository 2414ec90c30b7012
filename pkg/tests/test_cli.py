"""End-to-end command line checks: build, search, bench, report."""

import json
import os

import pytest

from hybridsearch.cli import main
from hybridsearch.synth import SynthSpec, generate_synthetic


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliwork")
    spec = SynthSpec(seed=21, doc_count=80, vocab_size=200,
                     n_queries=6, relevant_per_query=4)
    generate_synthetic(spec, root)
    config = {
        "paths": {
            "corpus": "corpus.jsonl",
            "queries": "queries.jsonl",
            "qrels": "qrels.txt",
            "svec": {"docs": "docs.svec", "queries": "queries.svec"},
            "dvec": {"docs": "docs.dvec", "queries": "queries.dvec"},
            "tvec": {"docs": "docs.tvec", "queries": "queries.tvec"},
            "index_dir": "index",
        },
        "paradigms": ["fts", "svs"],
        "fusion": {"method": "rrf", "k0": 30, "k": 5},
        "bench": {
            "threads": 1, "repetitions": 3, "warmup_queries": 2,
            "seed": 0,
            "combinations": [["fts"], ["svs"], ["fts", "svs"]],
            "fusion_methods": ["rrf"],
        },
    }
    config_path = root / "engine-config.json"
    config_path.write_text(json.dumps(config))
    return root, str(config_path)


class TestBuild:
    def test_build_writes_indexes(self, workdir):
        root, config_path = workdir
        assert main(["build", "--config", config_path]) == 0
        index = root / "index"
        assert (index / "engine.json").exists()
        assert (index / "manifest.ids").exists()
        assert (index / "fts.ftsidx").exists()
        assert (index / "svs.svsidx").exists()
        assert not (index / "dvs.dvsidx").exists()


class TestSearch:
    def test_search_output_schema(self, workdir, tmp_path):
        root, config_path = workdir
        main(["build", "--config", config_path])
        out = tmp_path / "results.jsonl"
        code = main([
            "search", "--config", config_path,
            "--queries", str(root / "queries.jsonl"),
            "--out", str(out),
        ])
        assert code == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 6
        first = lines[0]
        assert set(first) == {"qid", "hits"}
        assert first["qid"] == "q0"
        assert 0 < len(first["hits"]) <= 5
        for hit in first["hits"]:
            assert set(hit) == {"docid", "score"}
            assert hit["docid"].startswith("doc")
        scores = [h["score"] for h in first["hits"]]
        assert scores == sorted(scores, reverse=True)

    def test_top_hits_are_planted_docs(self, workdir, tmp_path):
        root, config_path = workdir
        main(["build", "--config", config_path])
        out = tmp_path / "results.jsonl"
        main(["search", "--config", config_path,
              "--queries", str(root / "queries.jsonl"),
              "--out", str(out)])
        from hybridsearch.io import read_qrels
        qrels = read_qrels(str(root / "qrels.txt"))
        for line in out.read_text().splitlines():
            rec = json.loads(line)
            top = rec["hits"][0]["docid"]
            assert top in qrels[rec["qid"]]


class TestBenchCommand:
    def test_bench_then_report(self, workdir, tmp_path, capsys):
        _, config_path = workdir
        out_dir = tmp_path / "bench-out"
        assert main(["bench", "--config", config_path,
                     "--out", str(out_dir)]) == 0
        assert (out_dir / "bench.json").exists()
        assert (out_dir / "report.csv").exists()
        assert (out_dir / "report.md").exists()
        capsys.readouterr()

        assert main(["report", "--in", str(out_dir),
                     "--format", "csv"]) == 0
        text = capsys.readouterr().out
        assert text.startswith("combo,")
        assert len(text.strip().split("\n")) == 4

        assert main(["report", "--in", str(out_dir),
                     "--format", "md"]) == 0
        assert "| combo |" in capsys.readouterr().out.replace("  ", " ")


class TestArgErrors:
    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_bad_report_format(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["report", "--in", str(tmp_path), "--format", "xml"])

    def test_report_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            main(["report", "--in", str(tmp_path / "nope"),
                  "--format", "csv"])
