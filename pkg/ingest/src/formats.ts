// Writers (and just enough readers for round-trip tests) for the
// engine's on-disk formats.
//
//   corpus/queries  JSONL, one {"id","text"} object per line
//   qrels           "qid 0 docid rel" whitespace rows
//   .dvec           HSDV, u32 version, u64 count, u32 dim, u8 dtype=0,
//                   then count*dim float32
//   .svec           HSSV, u32 version, u64 count, then per record
//                   u32 nnz + nnz * (u32 term_id, f32 weight),
//                   term ids strictly ascending, weights > 0
//   .tvec           HSTV, u32 version, u64 count, u32 dim, then per
//                   record u32 n_tokens (> 0) + n_tokens*dim float32
//
// All integers and floats little-endian.

import fs from "node:fs";

const VERSION = 1;

export type SparseRecord = { ids: number[]; weights: number[] };

export function writeJsonl(
  path: string,
  records: Iterable<{ id: string; text: string }>,
): number {
  const lines: string[] = [];
  for (const r of records) {
    lines.push(JSON.stringify({ id: r.id, text: r.text }));
  }
  fs.writeFileSync(path, lines.map((l) => l + "\n").join(""));
  return lines.length;
}

export type QrelRow = { qid: string; docid: string; rel: number };

export function writeQrels(path: string, rows: QrelRow[]): void {
  const out = rows.map((r) => `${r.qid} 0 ${r.docid} ${r.rel}\n`).join("");
  fs.writeFileSync(path, out);
}

function header(magic: string, rest: Buffer): Buffer {
  const head = Buffer.alloc(8);
  head.write(magic, 0, "ascii");
  head.writeUInt32LE(VERSION, 4);
  return Buffer.concat([head, rest]);
}

export function writeDvec(path: string, vectors: Float32Array[], dim: number) {
  const meta = Buffer.alloc(13);
  meta.writeBigUInt64LE(BigInt(vectors.length), 0);
  meta.writeUInt32LE(dim, 8);
  meta.writeUInt8(0, 12);
  const chunks = [header("HSDV", meta)];
  for (const v of vectors) {
    if (v.length !== dim) {
      throw new Error(`dense vector has length ${v.length}, expected ${dim}`);
    }
    const b = Buffer.alloc(dim * 4);
    for (let i = 0; i < dim; i++) b.writeFloatLE(v[i], i * 4);
    chunks.push(b);
  }
  fs.writeFileSync(path, Buffer.concat(chunks));
}

export function writeSvec(path: string, records: SparseRecord[]) {
  const meta = Buffer.alloc(8);
  meta.writeBigUInt64LE(BigInt(records.length), 0);
  const chunks = [header("HSSV", meta)];
  for (const rec of records) {
    const nnz = rec.ids.length;
    const b = Buffer.alloc(4 + nnz * 8);
    b.writeUInt32LE(nnz, 0);
    for (let i = 0; i < nnz; i++) {
      if (i > 0 && rec.ids[i] <= rec.ids[i - 1]) {
        throw new Error("sparse term ids must be strictly ascending");
      }
      if (!(rec.weights[i] > 0)) {
        throw new Error("sparse weights must be positive");
      }
      b.writeUInt32LE(rec.ids[i], 4 + i * 8);
      b.writeFloatLE(rec.weights[i], 8 + i * 8);
    }
    chunks.push(b);
  }
  fs.writeFileSync(path, Buffer.concat(chunks));
}

export function writeTvec(path: string, tensors: Float32Array[][], dim: number) {
  const meta = Buffer.alloc(12);
  meta.writeBigUInt64LE(BigInt(tensors.length), 0);
  meta.writeUInt32LE(dim, 8);
  const chunks = [header("HSTV", meta)];
  for (const rows of tensors) {
    if (rows.length === 0) {
      throw new Error("tensor records need at least one row");
    }
    const b = Buffer.alloc(4 + rows.length * dim * 4);
    b.writeUInt32LE(rows.length, 0);
    rows.forEach((row, r) => {
      if (row.length !== dim) {
        throw new Error(`tensor row has length ${row.length}, expected ${dim}`);
      }
      for (let i = 0; i < dim; i++) {
        b.writeFloatLE(row[i], 4 + (r * dim + i) * 4);
      }
    });
    chunks.push(b);
  }
  fs.writeFileSync(path, Buffer.concat(chunks));
}

// ---- readers, used by this package's own tests ----

function checkHeader(buf: Buffer, magic: string, path: string): number {
  if (buf.subarray(0, 4).toString("ascii") !== magic) {
    throw new Error(`${path}: bad magic`);
  }
  if (buf.readUInt32LE(4) !== VERSION) {
    throw new Error(`${path}: unsupported version`);
  }
  return 8;
}

export function readDvec(path: string): { dim: number; vectors: Float32Array[] } {
  const buf = fs.readFileSync(path);
  let pos = checkHeader(buf, "HSDV", path);
  const count = Number(buf.readBigUInt64LE(pos));
  const dim = buf.readUInt32LE(pos + 8);
  if (buf.readUInt8(pos + 12) !== 0) throw new Error(`${path}: bad dtype tag`);
  pos += 13;
  const vectors: Float32Array[] = [];
  for (let r = 0; r < count; r++) {
    const v = new Float32Array(dim);
    for (let i = 0; i < dim; i++) v[i] = buf.readFloatLE(pos + i * 4);
    vectors.push(v);
    pos += dim * 4;
  }
  if (pos !== buf.length) throw new Error(`${path}: trailing bytes`);
  return { dim, vectors };
}

export function readSvec(path: string): SparseRecord[] {
  const buf = fs.readFileSync(path);
  let pos = checkHeader(buf, "HSSV", path);
  const count = Number(buf.readBigUInt64LE(pos));
  pos += 8;
  const out: SparseRecord[] = [];
  for (let r = 0; r < count; r++) {
    const nnz = buf.readUInt32LE(pos);
    pos += 4;
    const ids: number[] = [];
    const weights: number[] = [];
    for (let i = 0; i < nnz; i++) {
      ids.push(buf.readUInt32LE(pos));
      weights.push(buf.readFloatLE(pos + 4));
      pos += 8;
    }
    out.push({ ids, weights });
  }
  if (pos !== buf.length) throw new Error(`${path}: trailing bytes`);
  return out;
}

export function readTvec(path: string): { dim: number; tensors: Float32Array[][] } {
  const buf = fs.readFileSync(path);
  let pos = checkHeader(buf, "HSTV", path);
  const count = Number(buf.readBigUInt64LE(pos));
  const dim = buf.readUInt32LE(pos + 8);
  pos += 12;
  const tensors: Float32Array[][] = [];
  for (let r = 0; r < count; r++) {
    const nTokens = buf.readUInt32LE(pos);
    pos += 4;
    const rows: Float32Array[] = [];
    for (let t = 0; t < nTokens; t++) {
      const row = new Float32Array(dim);
      for (let i = 0; i < dim; i++) row[i] = buf.readFloatLE(pos + i * 4);
      rows.push(row);
      pos += dim * 4;
    }
    tensors.push(rows);
  }
  if (pos !== buf.length) throw new Error(`${path}: trailing bytes`);
  return { dim, tensors };
}
