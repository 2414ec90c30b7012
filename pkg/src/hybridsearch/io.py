"""File formats: JSONL corpora, TREC qrels and the binary vector files.

All binary payloads are little-endian with float32 vector data.  Each
format opens with a 4-byte magic and a u32 version so a wrong or stale
file fails fast with FileFormatError instead of producing garbage.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorpusFormatError,
    DuplicateIdError,
    EmptyCorpusError,
    EmptyTensorError,
    FileFormatError,
)
from .text import TokenizerConfig, tokenize
from .types import CorpusManifest, SparseVector

DVEC_MAGIC = b"HSDV"
SVEC_MAGIC = b"HSSV"
TVEC_MAGIC = b"HSTV"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# JSONL corpora and queries

@dataclass
class Corpus:
    manifest: CorpusManifest
    texts: list[str]

    def __len__(self):
        return self.manifest.doc_count


def _iter_jsonl_records(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc.msg}")
            if not isinstance(record, dict):
                raise CorpusFormatError(path, line_no, "record is not an object")
            for key in ("id", "text"):
                if key not in record:
                    raise CorpusFormatError(path, line_no, f"missing {key!r} field")
                if not isinstance(record[key], str):
                    raise CorpusFormatError(path, line_no, f"{key!r} is not a string")
            if not record["id"]:
                raise CorpusFormatError(path, line_no, "empty id")
            yield record["id"], record["text"]


def load_corpus(path, tokenizer_config=TokenizerConfig()) -> Corpus:
    """Read a JSONL corpus; ordinals are assigned in file order."""
    ids, texts, doc_lens = [], [], []
    seen = set()
    for ext_id, text in _iter_jsonl_records(path):
        if ext_id in seen:
            raise DuplicateIdError(ext_id)
        seen.add(ext_id)
        ids.append(ext_id)
        texts.append(text)
        doc_lens.append(len(tokenize(text, tokenizer_config)))
    if not ids:
        raise EmptyCorpusError(f"no documents in {path}")
    return Corpus(CorpusManifest(tuple(ids), tuple(doc_lens)), texts)


def load_queries(path) -> list[tuple[str, str]]:
    out, seen = [], set()
    for qid, text in _iter_jsonl_records(path):
        if qid in seen:
            raise DuplicateIdError(qid)
        seen.add(qid)
        out.append((qid, text))
    return out


def write_jsonl(path, records):
    """Write {"id","text"} records; shared by tests and the synthesizer."""
    with open(path, "w", encoding="utf-8") as fh:
        for ext_id, text in records:
            fh.write(json.dumps({"id": ext_id, "text": text}) + "\n")


# ---------------------------------------------------------------------------
# TREC qrels and search output

def load_qrels(path) -> dict[str, dict[str, int]]:
    """Parse 'qid 0 docid rel' lines into nested dicts."""
    qrels: dict[str, dict[str, int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise CorpusFormatError(
                    path, line_no, f"expected 4 fields, got {len(parts)}"
                )
            qid, _, docid, rel = parts
            try:
                rel_value = int(rel)
            except ValueError:
                raise CorpusFormatError(path, line_no, f"bad relevance {rel!r}")
            qrels.setdefault(qid, {})[docid] = rel_value
    return qrels


def write_qrels(path, qrels):
    with open(path, "w", encoding="utf-8") as fh:
        for qid in qrels:
            for docid, rel in qrels[qid].items():
                fh.write(f"{qid} 0 {docid} {rel}\n")


def read_qrels(path) -> dict:
    """Inverse of write_qrels: qid -> {docid: grade}."""
    qrels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            qid, _, docid, rel = line.split()
            qrels.setdefault(qid, {})[docid] = int(rel)
    return qrels


def write_search_results(path, results):
    """results: iterable of (qid, [(docid, score), ...])."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid, hits in results:
            record = {
                "qid": qid,
                "hits": [{"docid": d, "score": float(s)} for d, s in hits],
            }
            fh.write(json.dumps(record) + "\n")


# ---------------------------------------------------------------------------
# Manifest sidecar (one external id per line, aligned with vector records)

def write_manifest_ids(path, external_ids):
    ids = getattr(external_ids, "external_ids", external_ids)
    with open(path, "w", encoding="utf-8") as fh:
        for ext_id in ids:
            fh.write(ext_id + "\n")


def read_manifest_ids(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Binary framing helpers

def _read_exact(fh, n, path, what):
    data = fh.read(n)
    if len(data) != n:
        raise FileFormatError(f"{path}: truncated while reading {what}")
    return data


def _check_header(fh, path, magic):
    got = fh.read(4)
    if got != magic:
        raise FileFormatError(
            f"{path}: bad magic {got!r}, expected {magic.decode()}"
        )
    (version,) = struct.unpack("<I", _read_exact(fh, 4, path, "version"))
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")


# ---------------------------------------------------------------------------
# .dvec: one dense float32 vector per record

def write_dvec(path, matrix):
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError(f"dense matrix must be 2-d, got shape {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(DVEC_MAGIC)
        fh.write(struct.pack("<IQIB", FORMAT_VERSION, matrix.shape[0],
                             matrix.shape[1], 0))
        fh.write(matrix.tobytes())


def read_dvec(path) -> np.ndarray:
    with open(path, "rb") as fh:
        _check_header(fh, path, DVEC_MAGIC)
        count, dim, dtype_tag = struct.unpack(
            "<QIB", _read_exact(fh, 13, path, "dvec header")
        )
        if dtype_tag != 0:
            raise FileFormatError(f"{path}: unknown dtype tag {dtype_tag}")
        if dim == 0:
            raise FileFormatError(f"{path}: zero dimensionality")
        payload = _read_exact(fh, count * dim * 4, path, "dvec payload")
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after payload")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    if not np.all(np.isfinite(matrix)):
        raise FileFormatError(f"{path}: non-finite vector values")
    return np.ascontiguousarray(matrix)


# ---------------------------------------------------------------------------
# .svec: per record u32 nnz then (u32 term_id, f32 weight) pairs, ids ascending

def write_svec(path, vectors):
    with open(path, "wb") as fh:
        fh.write(SVEC_MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(vectors)))
        for vec in vectors:
            fh.write(struct.pack("<I", vec.nnz))
            pairs = np.empty(vec.nnz, dtype=[("id", "<u4"), ("w", "<f4")])
            pairs["id"] = vec.term_ids
            pairs["w"] = vec.weights
            fh.write(pairs.tobytes())


def read_svec(path) -> list[SparseVector]:
    out = []
    with open(path, "rb") as fh:
        _check_header(fh, path, SVEC_MAGIC)
        (count,) = struct.unpack("<Q", _read_exact(fh, 8, path, "svec count"))
        for rec in range(count):
            (nnz,) = struct.unpack(
                "<I", _read_exact(fh, 4, path, f"record {rec} nnz")
            )
            raw = _read_exact(fh, nnz * 8, path, f"record {rec} entries")
            pairs = np.frombuffer(raw, dtype=[("id", "<u4"), ("w", "<f4")])
            ids = pairs["id"].astype(np.uint32)
            weights = pairs["w"].astype(np.float32)
            if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
                raise FileFormatError(
                    f"{path}: record {rec} has non-positive or non-finite weights"
                )
            if ids.size > 1 and not np.all(np.diff(ids.astype(np.int64)) > 0):
                raise FileFormatError(
                    f"{path}: record {rec} term ids not strictly ascending"
                )
            out.append(SparseVector(ids, weights, validate=False))
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after payload")
    return out


# ---------------------------------------------------------------------------
# .tvec: per record u32 n_tokens then n_tokens x dim float32 rows

def write_tvec(path, tensors, dim=None):
    if dim is None:
        if not tensors:
            raise ValueError("cannot infer dim from an empty tensor list")
        dim = int(np.asarray(tensors[0]).shape[1])
    with open(path, "wb") as fh:
        fh.write(TVEC_MAGIC)
        fh.write(struct.pack("<IQI", FORMAT_VERSION, len(tensors), dim))
        for rows in tensors:
            rows = np.ascontiguousarray(rows, dtype="<f4")
            if rows.ndim != 2 or rows.shape[1] != dim:
                raise ValueError(
                    f"tensor rows must be (n, {dim}), got shape {rows.shape}"
                )
            fh.write(struct.pack("<I", rows.shape[0]))
            fh.write(rows.tobytes())


def read_tvec_header(fh, path):
    _check_header(fh, path, TVEC_MAGIC)
    count, dim = struct.unpack("<QI", _read_exact(fh, 12, path, "tvec header"))
    if dim == 0:
        raise FileFormatError(f"{path}: zero dimensionality")
    return count, dim


def read_tvec(path) -> list[np.ndarray]:
    out = []
    with open(path, "rb") as fh:
        count, dim = read_tvec_header(fh, path)
        for rec in range(count):
            (n_tokens,) = struct.unpack(
                "<I", _read_exact(fh, 4, path, f"record {rec} token count")
            )
            if n_tokens == 0:
                raise EmptyTensorError(rec)
            raw = _read_exact(fh, n_tokens * dim * 4, path, f"record {rec} rows")
            rows = np.frombuffer(raw, dtype="<f4").reshape(n_tokens, dim)
            if not np.all(np.isfinite(rows)):
                raise FileFormatError(f"{path}: record {rec} has non-finite rows")
            out.append(np.ascontiguousarray(rows))
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after payload")
    return out


def scan_tvec_offsets(path):
    """Index a .tvec for random access without loading the payload.

    Returns (count, dim, offsets, n_tokens) where offsets[i] is the file
    position of record i's rows.
    """
    offsets = []
    token_counts = []
    with open(path, "rb") as fh:
        count, dim = read_tvec_header(fh, path)
        pos = fh.tell()
        for rec in range(count):
            fh.seek(pos)
            (n_tokens,) = struct.unpack(
                "<I", _read_exact(fh, 4, path, f"record {rec} token count")
            )
            if n_tokens == 0:
                raise EmptyTensorError(rec)
            offsets.append(pos + 4)
            token_counts.append(n_tokens)
            pos += 4 + n_tokens * dim * 4
        fh.seek(0, 2)
        if fh.tell() != pos:
            raise FileFormatError(f"{path}: size mismatch against record headers")
    return count, dim, np.asarray(offsets, dtype=np.int64), np.asarray(
        token_counts, dtype=np.int64
    )
