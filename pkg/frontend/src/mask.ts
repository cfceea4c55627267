/**
 * Binary mask editing primitives. Masks are Uint8Array of 0/1 in
 * row-major order; images are raw RGBA buffers so the core stays free
 * of DOM types and runs under plain node for tests.
 */

export interface RawImage {
  width: number;
  height: number;
  pixels: Uint8ClampedArray; // RGBA, length = 4 * width * height
}

export interface Point {
  x: number;
  y: number;
}

export interface Brush {
  radius: number;
  mode: "paint" | "erase";
}

export function cloneImage(img: RawImage): RawImage {
  return {
    width: img.width,
    height: img.height,
    pixels: new Uint8ClampedArray(img.pixels),
  };
}

export function emptyMask(width: number, height: number): Uint8Array {
  return new Uint8Array(width * height);
}

/** Stamp a filled disc (dx^2 + dy^2 <= r^2); out-of-bounds pixels clip. */
export function stampDisc(
  mask: Uint8Array,
  width: number,
  height: number,
  cx: number,
  cy: number,
  radius: number,
  value: 0 | 1,
): void {
  const r = Math.max(0, radius);
  const r2 = r * r;
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(width - 1, Math.ceil(cx + r));
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(height - 1, Math.ceil(cy + r));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) mask[y * width + x] = value;
    }
  }
}

/**
 * Apply one brush stroke along a path: discs stamped at every point and
 * at unit steps along each segment, so fast strokes leave no gaps.
 */
export function paintStroke(
  mask: Uint8Array,
  width: number,
  height: number,
  path: Point[],
  brush: Brush,
): void {
  if (path.length === 0) return;
  const value: 0 | 1 = brush.mode === "paint" ? 1 : 0;
  stampDisc(mask, width, height, path[0].x, path[0].y, brush.radius, value);
  for (let i = 1; i < path.length; i++) {
    const a = path[i - 1];
    const b = path[i];
    const steps = Math.max(1, Math.ceil(Math.hypot(b.x - a.x, b.y - a.y)));
    for (let s = 1; s <= steps; s++) {
      const t = s / steps;
      stampDisc(
        mask, width, height,
        a.x + (b.x - a.x) * t,
        a.y + (b.y - a.y) * t,
        brush.radius, value,
      );
    }
  }
}

export function maskArea(mask: Uint8Array): number {
  let n = 0;
  for (let i = 0; i < mask.length; i++) n += mask[i];
  return n;
}

export function unionInto(target: Uint8Array, source: Uint8Array): void {
  for (let i = 0; i < target.length; i++) {
    if (source[i]) target[i] = 1;
  }
}

export function masksEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}
