// BEIR-layout dataset -> engine corpus/queries/qrels files.
//
// Expected input directory:
//   corpus.jsonl    {"_id", "title"?, "text"} per line
//   queries.jsonl   {"_id", "text"} per line
//   qrels/test.tsv  TSV with header query-id, corpus-id, score
//                   (falls back to qrels.tsv, then a lone qrels/*.tsv)
//
// Ids are preserved verbatim; graded relevance (including 0) is kept.

import fs from "node:fs";
import path from "node:path";
import { writeJsonl, writeQrels, type QrelRow } from "./formats.js";

export type ConvertReport = {
  source: string;
  docs: number;
  queries: number;
  qrelRows: number;
  qrelsFile: string;
};

type BeirRecord = { id: string; text: string };

function parseBeirJsonl(file: string, withTitle: boolean): BeirRecord[] {
  const out: BeirRecord[] = [];
  const seen = new Set<string>();
  const lines = fs.readFileSync(file, "utf8").split("\n");
  lines.forEach((line, idx) => {
    if (!line.trim()) return;
    let rec: any;
    try {
      rec = JSON.parse(line);
    } catch {
      throw new Error(`${file}:${idx + 1}: invalid JSON`);
    }
    if (typeof rec._id !== "string" || rec._id === "") {
      throw new Error(`${file}:${idx + 1}: missing or empty _id`);
    }
    if (typeof rec.text !== "string") {
      throw new Error(`${file}:${idx + 1}: missing text field`);
    }
    if (seen.has(rec._id)) {
      throw new Error(`${file}:${idx + 1}: duplicate id ${rec._id}`);
    }
    seen.add(rec._id);
    const title = withTitle && typeof rec.title === "string" ? rec.title : "";
    const text = title ? `${title}\n${rec.text}` : rec.text;
    out.push({ id: rec._id, text });
  });
  if (out.length === 0) throw new Error(`${file}: no records`);
  return out;
}

function findQrelsFile(root: string): string {
  const direct = path.join(root, "qrels", "test.tsv");
  if (fs.existsSync(direct)) return direct;
  const flat = path.join(root, "qrels.tsv");
  if (fs.existsSync(flat)) return flat;
  const dir = path.join(root, "qrels");
  if (fs.existsSync(dir)) {
    const tsvs = fs.readdirSync(dir).filter((f) => f.endsWith(".tsv"));
    if (tsvs.length === 1) return path.join(dir, tsvs[0]);
    if (tsvs.length > 1) {
      throw new Error(`ambiguous qrels in ${dir}: ${tsvs.join(", ")}`);
    }
  }
  throw new Error(`no qrels found under ${root}`);
}

function parseQrelsTsv(file: string): QrelRow[] {
  const rows: QrelRow[] = [];
  const lines = fs.readFileSync(file, "utf8").split("\n");
  lines.forEach((line, idx) => {
    if (!line.trim()) return;
    const parts = line.split("\t");
    if (idx === 0 && parts[0].toLowerCase().includes("query")) return;
    if (parts.length < 3) {
      throw new Error(`${file}:${idx + 1}: expected 3 TSV fields`);
    }
    const rel = Number(parts[2]);
    if (!Number.isInteger(rel)) {
      throw new Error(`${file}:${idx + 1}: bad relevance ${parts[2]}`);
    }
    rows.push({ qid: parts[0], docid: parts[1], rel });
  });
  return rows;
}

export function convertDataset(inDir: string, outDir: string): ConvertReport {
  for (const f of ["corpus.jsonl", "queries.jsonl"]) {
    if (!fs.existsSync(path.join(inDir, f))) {
      throw new Error(`missing ${f} in ${inDir}`);
    }
  }
  const docs = parseBeirJsonl(path.join(inDir, "corpus.jsonl"), true);
  const queries = parseBeirJsonl(path.join(inDir, "queries.jsonl"), false);
  const qrelsFile = findQrelsFile(inDir);
  const qrels = parseQrelsTsv(qrelsFile);

  fs.mkdirSync(outDir, { recursive: true });
  writeJsonl(path.join(outDir, "corpus.jsonl"), docs);
  writeJsonl(path.join(outDir, "queries.jsonl"), queries);
  writeQrels(path.join(outDir, "qrels.txt"), qrels);

  const report: ConvertReport = {
    source: path.resolve(inDir),
    docs: docs.length,
    queries: queries.length,
    qrelRows: qrels.length,
    qrelsFile: path.resolve(qrelsFile),
  };
  fs.writeFileSync(
    path.join(outDir, "report.json"),
    JSON.stringify(report, null, 2) + "\n",
  );
  return report;
}
