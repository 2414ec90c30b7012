"""File format round-trips and failure modes."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridsearch import io as hio
from hybridsearch.errors import (
    CorpusFormatError,
    DuplicateIdError,
    EmptyCorpusError,
    EmptyTensorError,
    FileFormatError,
)
from hybridsearch.types import SparseVector


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


class TestCorpusLoading:
    def test_ordinals_follow_file_order(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_lines(p, [
            json.dumps({"id": "d2", "text": "two words"}),
            json.dumps({"id": "d1", "text": "one two three"}),
        ])
        corpus = hio.load_corpus(p)
        assert corpus.manifest.external_ids == ("d2", "d1")
        assert corpus.manifest.doc_lens == (2, 3)
        assert corpus.manifest.avg_doc_len == pytest.approx(2.5)
        assert corpus.texts[1] == "one two three"

    def test_blank_lines_skipped(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text('{"id": "a", "text": "x"}\n\n   \n', encoding="utf-8")
        assert len(hio.load_corpus(p)) == 1

    def test_invalid_json_reports_line(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_lines(p, [json.dumps({"id": "a", "text": "x"}), "{oops"])
        with pytest.raises(CorpusFormatError) as exc:
            hio.load_corpus(p)
        assert exc.value.line_no == 2

    def test_missing_field(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_lines(p, [json.dumps({"id": "a"})])
        with pytest.raises(CorpusFormatError):
            hio.load_corpus(p)

    def test_non_string_text(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_lines(p, [json.dumps({"id": "a", "text": 5})])
        with pytest.raises(CorpusFormatError):
            hio.load_corpus(p)

    def test_duplicate_id(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_lines(p, [
            json.dumps({"id": "a", "text": "x"}),
            json.dumps({"id": "a", "text": "y"}),
        ])
        with pytest.raises(DuplicateIdError):
            hio.load_corpus(p)

    def test_empty_corpus(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text("", encoding="utf-8")
        with pytest.raises(EmptyCorpusError):
            hio.load_corpus(p)

    def test_queries_round_trip(self, tmp_path):
        p = tmp_path / "q.jsonl"
        hio.write_jsonl(p, [("q1", "alpha"), ("q2", "beta")])
        assert hio.load_queries(p) == [("q1", "alpha"), ("q2", "beta")]


class TestQrels:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "r.qrels"
        qrels = {"q1": {"d1": 2, "d2": 0}, "q2": {"d1": 1}}
        hio.write_qrels(p, qrels)
        assert hio.load_qrels(p) == qrels

    def test_bad_field_count(self, tmp_path):
        p = tmp_path / "r.qrels"
        p.write_text("q1 0 d1\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError):
            hio.load_qrels(p)

    def test_bad_relevance(self, tmp_path):
        p = tmp_path / "r.qrels"
        p.write_text("q1 0 d1 high\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError):
            hio.load_qrels(p)


class TestSearchOutput:
    def test_jsonl_shape(self, tmp_path):
        p = tmp_path / "out.jsonl"
        hio.write_search_results(p, [("q1", [("d3", 1.5), ("d1", 0.5)])])
        record = json.loads(p.read_text().strip())
        assert record == {
            "qid": "q1",
            "hits": [
                {"docid": "d3", "score": 1.5},
                {"docid": "d1", "score": 0.5},
            ],
        }


class TestDvec:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "v.dvec"
        mat = np.arange(12, dtype=np.float32).reshape(3, 4) / 7
        hio.write_dvec(p, mat)
        got = hio.read_dvec(p)
        assert got.dtype == np.float32
        np.testing.assert_array_equal(got, mat)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "v.dvec"
        p.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(FileFormatError):
            hio.read_dvec(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "v.dvec"
        p.write_bytes(hio.DVEC_MAGIC + struct.pack("<IQIB", 9, 0, 4, 0))
        with pytest.raises(FileFormatError):
            hio.read_dvec(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "v.dvec"
        hio.write_dvec(p, np.ones((2, 3), dtype=np.float32))
        data = p.read_bytes()
        p.write_bytes(data[:-5])
        with pytest.raises(FileFormatError):
            hio.read_dvec(p)

    def test_trailing_bytes(self, tmp_path):
        p = tmp_path / "v.dvec"
        hio.write_dvec(p, np.ones((2, 3), dtype=np.float32))
        p.write_bytes(p.read_bytes() + b"\x00")
        with pytest.raises(FileFormatError):
            hio.read_dvec(p)

    def test_non_finite_rejected(self, tmp_path):
        p = tmp_path / "v.dvec"
        mat = np.ones((1, 2), dtype=np.float32)
        mat[0, 0] = np.inf
        hio.write_dvec(p, mat)
        with pytest.raises(FileFormatError):
            hio.read_dvec(p)

    @settings(max_examples=25)
    @given(
        count=st.integers(min_value=1, max_value=8),
        dim=st.integers(min_value=1, max_value=16),
    )
    def test_round_trip_property(self, count, dim, tmp_path_factory):
        rng = np.random.default_rng(count * 100 + dim)
        mat = rng.standard_normal((count, dim)).astype(np.float32)
        p = tmp_path_factory.mktemp("dvec") / "v.dvec"
        hio.write_dvec(p, mat)
        np.testing.assert_array_equal(hio.read_dvec(p), mat)


class TestSvec:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "v.svec"
        vecs = [
            SparseVector([1, 5, 9], [0.5, 1.5, 2.5]),
            SparseVector([], []),
            SparseVector([0], [3.0]),
        ]
        hio.write_svec(p, vecs)
        got = hio.read_svec(p)
        assert got == vecs

    def test_rejects_descending_ids(self, tmp_path):
        p = tmp_path / "v.svec"
        body = struct.pack("<IQ", 1, 1) + struct.pack("<I", 2)
        body += struct.pack("<If", 5, 1.0) + struct.pack("<If", 3, 1.0)
        p.write_bytes(hio.SVEC_MAGIC + body)
        with pytest.raises(FileFormatError):
            hio.read_svec(p)

    def test_rejects_zero_weight(self, tmp_path):
        p = tmp_path / "v.svec"
        body = struct.pack("<IQ", 1, 1) + struct.pack("<I", 1)
        body += struct.pack("<If", 5, 0.0)
        p.write_bytes(hio.SVEC_MAGIC + body)
        with pytest.raises(FileFormatError):
            hio.read_svec(p)

    def test_truncated_record(self, tmp_path):
        p = tmp_path / "v.svec"
        hio.write_svec(p, [SparseVector([1, 2], [1.0, 2.0])])
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FileFormatError):
            hio.read_svec(p)

    @settings(max_examples=25)
    @given(
        dicts=st.lists(
            st.dictionaries(
                st.integers(min_value=0, max_value=1000),
                st.floats(min_value=0.015625, max_value=100.0, width=32),
                max_size=10,
            ),
            max_size=6,
        )
    )
    def test_round_trip_property(self, dicts, tmp_path_factory):
        vecs = [SparseVector.from_dict(d) for d in dicts]
        p = tmp_path_factory.mktemp("svec") / "v.svec"
        hio.write_svec(p, vecs)
        assert hio.read_svec(p) == vecs


class TestTvec:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "v.tvec"
        tensors = [
            np.ones((2, 3), dtype=np.float32),
            np.arange(3, dtype=np.float32).reshape(1, 3),
        ]
        hio.write_tvec(p, tensors)
        got = hio.read_tvec(p)
        assert len(got) == 2
        for a, b in zip(got, tensors):
            np.testing.assert_array_equal(a, b)

    def test_empty_record_raises_with_ordinal(self, tmp_path):
        p = tmp_path / "v.tvec"
        body = struct.pack("<IQI", 1, 2, 3)
        body += struct.pack("<I", 1) + np.ones(3, dtype="<f4").tobytes()
        body += struct.pack("<I", 0)
        p.write_bytes(hio.TVEC_MAGIC + body)
        with pytest.raises(EmptyTensorError) as exc:
            hio.read_tvec(p)
        assert exc.value.ordinal == 1

    def test_dim_mismatch_on_write(self, tmp_path):
        p = tmp_path / "v.tvec"
        with pytest.raises(ValueError):
            hio.write_tvec(
                p,
                [np.ones((1, 3), dtype=np.float32), np.ones((1, 4), dtype=np.float32)],
            )

    def test_offsets_match_full_read(self, tmp_path):
        p = tmp_path / "v.tvec"
        rng = np.random.default_rng(3)
        tensors = [
            rng.standard_normal((n, 4)).astype(np.float32) for n in (3, 1, 7, 2)
        ]
        hio.write_tvec(p, tensors)
        count, dim, offsets, token_counts = hio.scan_tvec_offsets(p)
        assert (count, dim) == (4, 4)
        assert list(token_counts) == [3, 1, 7, 2]
        full = hio.read_tvec(p)
        raw = p.read_bytes()
        for i, rows in enumerate(full):
            start = offsets[i]
            end = start + token_counts[i] * dim * 4
            got = np.frombuffer(raw[start:end], dtype="<f4").reshape(-1, dim)
            np.testing.assert_array_equal(got, rows)

    def test_size_mismatch_detected(self, tmp_path):
        p = tmp_path / "v.tvec"
        hio.write_tvec(p, [np.ones((2, 3), dtype=np.float32)])
        p.write_bytes(p.read_bytes() + b"\xff\xff")
        with pytest.raises(FileFormatError):
            hio.scan_tvec_offsets(p)


class TestManifestSidecar:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "ids.manifest"
        hio.write_manifest_ids(p, ["d1", "d2", "long id with spaces"])
        assert hio.read_manifest_ids(p) == ["d1", "d2", "long id with spaces"]
