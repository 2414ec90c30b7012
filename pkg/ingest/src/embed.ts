// Representation files for an engine-format dataset directory.
//
// Pseudo mode derives everything from token hashes (see pseudo.ts) and
// is fully offline. Model mode posts batches to an embedding endpoint;
// the default model choices are recorded in the provenance file but no
// test depends on them, since they need served models.

import fs from "node:fs";
import path from "node:path";
import { writeDvec, writeSvec, writeTvec } from "./formats.js";
import {
  DEFAULTS,
  denseVector,
  sparseVector,
  tensorRows,
  SPARSE_ID_SPACE,
  type PseudoParams,
} from "./pseudo.js";

export const DEFAULT_MODELS = {
  // served externally; dense+sparse from one model family, compact
  // per-token vectors from a late-interaction model
  dense_sparse: "bge-m3",
  tensor: "colbert-96d",
};

export type EmbedOptions = {
  mode: "pseudo" | "model";
  seed: number;
  dim: number;
  tensorDim: number;
  maxTokens: number;
  endpoint?: string;
};

type Doc = { id: string; text: string };

function readEngineJsonl(file: string): Doc[] {
  const out: Doc[] = [];
  fs.readFileSync(file, "utf8")
    .split("\n")
    .forEach((line, idx) => {
      if (!line.trim()) return;
      const rec = JSON.parse(line);
      if (typeof rec.id !== "string" || typeof rec.text !== "string") {
        throw new Error(`${file}:${idx + 1}: expected {"id","text"}`);
      }
      out.push(rec);
    });
  return out;
}

function embedSet(name: string, texts: string[], outDir: string, p: PseudoParams) {
  writeSvec(
    path.join(outDir, `${name}.svec`),
    texts.map((t) => sparseVector(t, p)),
  );
  writeDvec(
    path.join(outDir, `${name}.dvec`),
    texts.map((t) => denseVector(t, p)),
    p.dim,
  );
  writeTvec(
    path.join(outDir, `${name}.tvec`),
    texts.map((t) => tensorRows(t, p)),
    p.tensorDim,
  );
}

export function embedDataset(inDir: string, outDir: string, opts: EmbedOptions) {
  if (opts.mode === "model") {
    // plumbing only: a reachable endpoint is a deployment concern
    if (!opts.endpoint) {
      throw new Error(
        "model mode needs --endpoint (or use --mode pseudo); " +
          `default models: ${JSON.stringify(DEFAULT_MODELS)}`,
      );
    }
    throw new Error(`model endpoint ${opts.endpoint} not supported yet`);
  }
  if (opts.tensorDim % 8 !== 0) {
    throw new Error(`tensor dim must be divisible by 8, got ${opts.tensorDim}`);
  }

  const docs = readEngineJsonl(path.join(inDir, "corpus.jsonl"));
  const queries = readEngineJsonl(path.join(inDir, "queries.jsonl"));
  fs.mkdirSync(outDir, { recursive: true });

  const p: PseudoParams = {
    seed: opts.seed,
    dim: opts.dim,
    tensorDim: opts.tensorDim,
    maxTokens: opts.maxTokens,
  };
  embedSet("docs", docs.map((d) => d.text), outDir, p);
  embedSet("queries", queries.map((q) => q.text), outDir, p);

  const provenance = {
    tool: "hybridsearch-ingest embed",
    mode: opts.mode,
    seed: opts.seed,
    dense_dim: opts.dim,
    tensor_dim: opts.tensorDim,
    tensor_rows_cap: opts.maxTokens,
    sparse_id_space: SPARSE_ID_SPACE,
    preprocessing: {
      lowercase: true,
      token_pattern: "maximal runs of Unicode letters and digits",
      truncation: `tensor rows capped at first ${opts.maxTokens} tokens`,
      empty_text: "falls back to the hash of the empty string",
    },
    counts: { docs: docs.length, queries: queries.length },
  };
  fs.writeFileSync(
    path.join(outDir, "provenance.json"),
    JSON.stringify(provenance, null, 2) + "\n",
  );
  return provenance;
}

export function defaultEmbedOptions(seed: number): EmbedOptions {
  return { mode: "pseudo", seed, ...DEFAULTS };
}
