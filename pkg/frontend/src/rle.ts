/**
 * Uncompressed run-length masks, matching the server wire format:
 * counts over the row-major flattening, alternating runs of 0s and 1s,
 * always starting with the count of leading zeros (possibly 0).
 */

export interface RleMask {
  size: [number, number]; // [height, width]
  counts: number[];
}

export function encodeRle(mask: Uint8Array, height: number, width: number): RleMask {
  if (mask.length !== height * width) {
    throw new Error(`mask length ${mask.length} != ${height}x${width}`);
  }
  const counts: number[] = [];
  let current = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === current) {
      run++;
    } else {
      counts.push(run);
      current = v;
      run = 1;
    }
  }
  counts.push(run);
  return { size: [height, width], counts };
}

export function decodeRle(rle: RleMask): Uint8Array {
  const [height, width] = rle.size;
  const total = rle.counts.reduce((a, b) => a + b, 0);
  if (total !== height * width) {
    throw new Error(`RLE counts sum to ${total}, expected ${height * width}`);
  }
  const out = new Uint8Array(height * width);
  let pos = 0;
  let value = 0;
  for (const count of rle.counts) {
    if (value === 1) out.fill(1, pos, pos + count);
    pos += count;
    value ^= 1;
  }
  return out;
}
