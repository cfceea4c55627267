import { describe, expect, it } from "vitest";

import { decodeRle, encodeRle } from "../src/rle.js";

function randomMask(h: number, w: number, seed: number): Uint8Array {
  // small deterministic LCG so the test needs no RNG dependency
  let state = seed >>> 0;
  const next = () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
  const out = new Uint8Array(h * w);
  for (let i = 0; i < out.length; i++) out[i] = next() < 0.5 ? 1 : 0;
  return out;
}

describe("rle", () => {
  it("round-trips a simple mask", () => {
    const mask = Uint8Array.from([0, 1, 1, 1, 0, 0]);
    const rle = encodeRle(mask, 2, 3);
    expect(rle.size).toEqual([2, 3]);
    expect(rle.counts.reduce((a, b) => a + b, 0)).toBe(6);
    expect(Array.from(decodeRle(rle))).toEqual(Array.from(mask));
  });

  it("starts counts with the zero-run even when empty", () => {
    const rle = encodeRle(Uint8Array.from([1, 1, 1, 1]), 2, 2);
    expect(rle.counts[0]).toBe(0);
  });

  it("encodes all-zero masks as one run", () => {
    const rle = encodeRle(new Uint8Array(12), 3, 4);
    expect(rle.counts).toEqual([12]);
  });

  it("round-trips random masks losslessly", () => {
    for (let seed = 1; seed <= 30; seed++) {
      const h = 1 + (seed % 13);
      const w = 1 + ((seed * 7) % 17);
      const mask = randomMask(h, w, seed);
      const back = decodeRle(encodeRle(mask, h, w));
      expect(Array.from(back)).toEqual(Array.from(mask));
    }
  });

  it("rejects count sums that disagree with the size", () => {
    expect(() => decodeRle({ size: [2, 2], counts: [3] })).toThrow();
  });

  it("matches the server wire format on a known case", () => {
    // [[0,1,1],[1,0,0]] flattens to 0 1 1 1 0 0 -> counts [1,3,2]
    const rle = encodeRle(Uint8Array.from([0, 1, 1, 1, 0, 0]), 2, 3);
    expect(rle.counts).toEqual([1, 3, 2]);
  });
});
