// Deterministic hash-based pseudo-embedder.
//
// Every token maps to a fixed pseudo-random unit vector keyed by
// (seed, namespace, token). A text's dense vector is the normalized sum
// of its token vectors, so texts sharing more tokens land closer
// together; tensor rows are the per-token vectors themselves. This is
// enough to smoke-test the engine end to end without any model.

import { hash32, mulberry32 } from "./rng.js";
import { tokenize } from "./tokenize.js";
import type { SparseRecord } from "./formats.js";

export const SPARSE_ID_SPACE = 1 << 20;

export type PseudoParams = {
  seed: number;
  dim: number;
  tensorDim: number;
  maxTokens: number;
};

export const DEFAULTS: Omit<PseudoParams, "seed"> = {
  dim: 256,
  tensorDim: 96,
  maxTokens: 32,
};

/** Unit vector for one token; `ns` separates the dense and tensor spaces. */
export function tokenVector(
  token: string,
  ns: string,
  seed: number,
  dim: number,
): Float32Array {
  const next = mulberry32(hash32(`${ns}:${token}`, seed));
  const v = new Float32Array(dim);
  let norm = 0;
  for (let i = 0; i < dim; i++) {
    v[i] = next() * 2 - 1;
    norm += v[i] * v[i];
  }
  norm = Math.sqrt(norm);
  if (norm < 1e-12) {
    v[0] = 1; // astronomically unlikely, but the formats reject zeros
    norm = 1;
  }
  for (let i = 0; i < dim; i++) v[i] = v[i] / norm;
  return v;
}

function tokensOrFallback(text: string): string[] {
  const tokens = tokenize(text);
  // an empty text still needs a representation; hash the empty string
  return tokens.length > 0 ? tokens : [""];
}

export function denseVector(text: string, p: PseudoParams): Float32Array {
  const sum = new Float64Array(p.dim);
  for (const token of tokensOrFallback(text)) {
    const tv = tokenVector(token, "d", p.seed, p.dim);
    for (let i = 0; i < p.dim; i++) sum[i] += tv[i];
  }
  let norm = 0;
  for (let i = 0; i < p.dim; i++) norm += sum[i] * sum[i];
  norm = Math.sqrt(norm) || 1;
  const out = new Float32Array(p.dim);
  for (let i = 0; i < p.dim; i++) out[i] = sum[i] / norm;
  return out;
}

export function sparseVector(text: string, p: PseudoParams): SparseRecord {
  const tf = new Map<number, number>();
  for (const token of tokenize(text)) {
    const id = hash32(`s:${token}`, p.seed) % SPARSE_ID_SPACE;
    tf.set(id, (tf.get(id) ?? 0) + 1);
  }
  const ids = [...tf.keys()].sort((a, b) => a - b);
  return { ids, weights: ids.map((id) => tf.get(id)!) };
}

export function tensorRows(text: string, p: PseudoParams): Float32Array[] {
  return tokensOrFallback(text)
    .slice(0, p.maxTokens)
    .map((token) => tokenVector(token, "t", p.seed, p.tensorDim));
}

export function dot(a: Float32Array, b: Float32Array): number {
  let s = 0;
  for (let i = 0; i < a.length; i++) s += a[i] * b[i];
  return s;
}
