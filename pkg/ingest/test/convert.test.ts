import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { convertDataset } from "../src/convert.js";

let root: string;

function writeBeir(
  dir: string,
  docs: object[],
  queries: object[],
  qrelsTsv: string,
) {
  fs.mkdirSync(path.join(dir, "qrels"), { recursive: true });
  const jsonl = (rows: object[]) =>
    rows.map((r) => JSON.stringify(r) + "\n").join("");
  fs.writeFileSync(path.join(dir, "corpus.jsonl"), jsonl(docs));
  fs.writeFileSync(path.join(dir, "queries.jsonl"), jsonl(queries));
  fs.writeFileSync(path.join(dir, "qrels", "test.tsv"), qrelsTsv);
}

beforeAll(() => {
  root = fs.mkdtempSync(path.join(os.tmpdir(), "ingest-convert-"));
});
afterAll(() => fs.rmSync(root, { recursive: true, force: true }));

describe("convertDataset", () => {
  it("converts a 3-doc toy dataset preserving ids and counts", () => {
    const inDir = path.join(root, "toy");
    writeBeir(
      inDir,
      [
        { _id: "d1", title: "Solar", text: "panels convert sunlight" },
        { _id: "d2", title: "", text: "bread rises with yeast" },
        { _id: "d3", text: "glaciers carve valleys" },
      ],
      [
        { _id: "q1", text: "how do solar panels work" },
        { _id: "q2", text: "why do glaciers carve valleys" },
      ],
      "query-id\tcorpus-id\tscore\nq1\td1\t2\nq1\td2\t0\nq2\td3\t1\n",
    );
    const outDir = path.join(root, "toy-out");
    const report = convertDataset(inDir, outDir);
    expect(report.docs).toBe(3);
    expect(report.queries).toBe(2);
    expect(report.qrelRows).toBe(3);

    const corpus = fs
      .readFileSync(path.join(outDir, "corpus.jsonl"), "utf8")
      .trim()
      .split("\n")
      .map((l) => JSON.parse(l));
    expect(corpus.map((r) => r.id)).toEqual(["d1", "d2", "d3"]);
    expect(corpus[0].text).toBe("Solar\npanels convert sunlight");
    expect(corpus[1].text).toBe("bread rises with yeast");

    // rel=0 rows are graded judgments, not noise; they must survive
    const qrels = fs.readFileSync(path.join(outDir, "qrels.txt"), "utf8");
    expect(qrels).toContain("q1 0 d2 0");
    expect(qrels.trim().split("\n")).toHaveLength(3);

    const saved = JSON.parse(
      fs.readFileSync(path.join(outDir, "report.json"), "utf8"),
    );
    expect(saved.docs).toBe(3);
  });

  it("rejects records without _id or text", () => {
    const inDir = path.join(root, "bad");
    writeBeir(
      inDir,
      [{ _id: "d1" }],
      [{ _id: "q1", text: "x" }],
      "q1\td1\t1\n",
    );
    expect(() => convertDataset(inDir, path.join(root, "bad-out"))).toThrow(
      /missing text/,
    );
  });

  it("rejects duplicate ids", () => {
    const inDir = path.join(root, "dup");
    writeBeir(
      inDir,
      [
        { _id: "d1", text: "a" },
        { _id: "d1", text: "b" },
      ],
      [{ _id: "q1", text: "x" }],
      "q1\td1\t1\n",
    );
    expect(() => convertDataset(inDir, path.join(root, "dup-out"))).toThrow(
      /duplicate/,
    );
  });

  it("errors when qrels are ambiguous", () => {
    const inDir = path.join(root, "ambig");
    writeBeir(
      inDir,
      [{ _id: "d1", text: "a" }],
      [{ _id: "q1", text: "x" }],
      "q1\td1\t1\n",
    );
    fs.renameSync(
      path.join(inDir, "qrels", "test.tsv"),
      path.join(inDir, "qrels", "dev.tsv"),
    );
    fs.writeFileSync(path.join(inDir, "qrels", "train.tsv"), "q1\td1\t1\n");
    expect(() => convertDataset(inDir, path.join(root, "ambig-out"))).toThrow(
      /ambiguous/,
    );
  });
});
