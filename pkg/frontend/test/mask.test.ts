import { describe, expect, it } from "vitest";

import {
  emptyMask,
  maskArea,
  masksEqual,
  paintStroke,
  stampDisc,
} from "../src/mask.js";

describe("stampDisc", () => {
  it.each([4, 6, 10])("disc of radius %i covers ~pi r^2 pixels", (r) => {
    const size = 4 * r;
    const mask = emptyMask(size, size);
    stampDisc(mask, size, size, size / 2, size / 2, r, 1);
    const area = maskArea(mask);
    const ideal = Math.PI * r * r;
    expect(area).toBeGreaterThanOrEqual(0.9 * ideal);
    expect(area).toBeLessThanOrEqual(1.1 * ideal);
  });

  it("clips at the borders instead of throwing", () => {
    const mask = emptyMask(8, 8);
    stampDisc(mask, 8, 8, -2, -2, 4, 1);
    expect(maskArea(mask)).toBeGreaterThan(0);
    stampDisc(mask, 8, 8, 100, 100, 3, 1);
  });
});

describe("paintStroke", () => {
  it("erase with the same geometry restores all-zeros", () => {
    const mask = emptyMask(32, 32);
    const path = [{ x: 8, y: 8 }, { x: 24, y: 20 }];
    paintStroke(mask, 32, 32, path, { radius: 5, mode: "paint" });
    expect(maskArea(mask)).toBeGreaterThan(0);
    paintStroke(mask, 32, 32, path, { radius: 5, mode: "erase" });
    expect(masksEqual(mask, emptyMask(32, 32))).toBe(true);
  });

  it("leaves no gaps along fast strokes", () => {
    const mask = emptyMask(64, 16);
    paintStroke(mask, 64, 16, [{ x: 4, y: 8 }, { x: 60, y: 8 }], {
      radius: 3,
      mode: "paint",
    });
    // every column the stroke crosses has at least one painted pixel
    for (let x = 4; x <= 60; x++) {
      let found = false;
      for (let y = 0; y < 16; y++) if (mask[y * 64 + x]) found = true;
      expect(found).toBe(true);
    }
  });

  it("out-of-bounds path points are clipped", () => {
    const mask = emptyMask(16, 16);
    paintStroke(mask, 16, 16, [{ x: -10, y: 8 }, { x: 30, y: 8 }], {
      radius: 2,
      mode: "paint",
    });
    expect(maskArea(mask)).toBeGreaterThan(0);
  });

  it("single click stamps one disc", () => {
    const mask = emptyMask(20, 20);
    paintStroke(mask, 20, 20, [{ x: 10, y: 10 }], { radius: 4, mode: "paint" });
    const single = emptyMask(20, 20);
    stampDisc(single, 20, 20, 10, 10, 4, 1);
    expect(masksEqual(mask, single)).toBe(true);
  });
});
