import { describe, expect, it } from "vitest";
import {
  denseVector,
  dot,
  sparseVector,
  tensorRows,
  tokenVector,
  type PseudoParams,
} from "../src/pseudo.js";

const P: PseudoParams = { seed: 42, dim: 64, tensorDim: 32, maxTokens: 8 };

describe("token vectors", () => {
  it("are unit length and deterministic", () => {
    const a = tokenVector("solar", "d", 42, 64);
    const b = tokenVector("solar", "d", 42, 64);
    expect(Array.from(a)).toEqual(Array.from(b));
    expect(dot(a, a)).toBeCloseTo(1, 5);
  });

  it("differ across seeds and namespaces", () => {
    const base = tokenVector("solar", "d", 42, 64);
    expect(Array.from(tokenVector("solar", "d", 43, 64))).not.toEqual(
      Array.from(base),
    );
    expect(Array.from(tokenVector("solar", "t", 42, 64))).not.toEqual(
      Array.from(base),
    );
  });
});

describe("dense pseudo vectors", () => {
  it("identical texts give identical vectors", () => {
    const a = denseVector("the quick brown fox", P);
    const b = denseVector("the quick brown fox", P);
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it("similarity tracks token overlap on seeded cases", () => {
    // overlap(A,B)=3 terms, overlap(A,C)=1, overlap(A,D)=0
    const a = denseVector("solar panels convert sunlight", P);
    const b = denseVector("solar panels capture sunlight efficiently", P);
    const c = denseVector("panels of the committee met", P);
    const d = denseVector("bread rises when yeast ferments", P);
    expect(dot(a, b)).toBeGreaterThan(dot(a, c));
    expect(dot(a, c)).toBeGreaterThan(dot(a, d));
  });

  it("handles empty text without NaNs", () => {
    const v = denseVector("", P);
    expect(Array.from(v).every(Number.isFinite)).toBe(true);
    expect(dot(v, v)).toBeCloseTo(1, 5);
  });
});

describe("sparse pseudo vectors", () => {
  it("ids are strictly ascending with tf weights", () => {
    const rec = sparseVector("b a b c a b", P);
    for (let i = 1; i < rec.ids.length; i++) {
      expect(rec.ids[i]).toBeGreaterThan(rec.ids[i - 1]);
    }
    expect(rec.weights.reduce((s, w) => s + w, 0)).toBe(6);
    expect(Math.max(...rec.weights)).toBe(3); // "b"
  });

  it("same token set hashes to the same ids across texts", () => {
    const a = sparseVector("alpha beta", P);
    const b = sparseVector("beta alpha alpha", P);
    expect(a.ids).toEqual(b.ids);
  });
});

describe("tensor rows", () => {
  it("caps rows at maxTokens and keeps token order", () => {
    const text = Array.from({ length: 20 }, (_, i) => `w${i}`).join(" ");
    const rows = tensorRows(text, P);
    expect(rows).toHaveLength(P.maxTokens);
    expect(Array.from(rows[0])).toEqual(
      Array.from(tokenVector("w0", "t", P.seed, P.tensorDim)),
    );
  });

  it("emits one fallback row for empty text", () => {
    expect(tensorRows("", P)).toHaveLength(1);
  });
});
