/**
 * In-process stand-in for the erase service, speaking the same JSON
 * surface the HTTP API exposes. Jobs advance one status per poll along
 * a configurable script; results are computed from the submitted image
 * and mask so tests can assert real round trips.
 */

import type { HttpJson, JobDoc, SegmentDoc } from "../src/client.js";
import type { RawImage } from "../src/mask.js";
import type { ImageCodec } from "../src/session.js";
import { RleMask, decodeRle } from "../src/rle.js";

/** Codec for tests: base64 JSON of the raw buffer, no PNG involved. */
export const jsonCodec: ImageCodec = {
  encode(img: RawImage): string {
    return Buffer.from(
      JSON.stringify({
        width: img.width,
        height: img.height,
        pixels: Array.from(img.pixels),
      }),
    ).toString("base64");
  },
  decode(b64: string): RawImage {
    const doc = JSON.parse(Buffer.from(b64, "base64").toString());
    return {
      width: doc.width,
      height: doc.height,
      pixels: new Uint8ClampedArray(doc.pixels),
    };
  },
};

export type EraseTransform = (image: RawImage, mask: Uint8Array) => RawImage;

export const identityTransform: EraseTransform = (image) => ({
  width: image.width,
  height: image.height,
  pixels: new Uint8ClampedArray(image.pixels),
});

/** Blanks the masked pixels, a visible stand-in for real erasure. */
export const blankMaskTransform: EraseTransform = (image, mask) => {
  const pixels = new Uint8ClampedArray(image.pixels);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      pixels[4 * i] = 0;
      pixels[4 * i + 1] = 0;
      pixels[4 * i + 2] = 0;
    }
  }
  return { width: image.width, height: image.height, pixels };
};

interface StubJob {
  doc: JobDoc;
  script: JobDoc["status"][];
  polls: number;
  result: RawImage;
}

export interface StubOptions {
  segments?: SegmentDoc[];
  transform?: EraseTransform;
  /** statuses returned on successive polls before settling */
  pendingPolls?: JobDoc["status"][];
  failWith?: { stage: string; error: string };
}

export class StubServer implements HttpJson {
  jobs = new Map<string, StubJob>();
  submissions: { image: RawImage; maskRle: RleMask; config?: unknown }[] = [];
  private nextId = 1;

  constructor(private options: StubOptions = {}) {}

  async post(path: string, body: any): Promise<any> {
    if (path !== "/v1/erase") throw new Error(`unexpected POST ${path}`);
    const image = jsonCodec.decode(body.image_b64) as RawImage;
    const mask = decodeRle(body.mask_rle);
    if (mask.length !== image.width * image.height) {
      throw new Error("mask does not match image");
    }
    this.submissions.push({ image, maskRle: body.mask_rle, config: body.config });
    const id = `job-${this.nextId++}`;
    const pending = this.options.pendingPolls ?? ["queued", "running"];
    const finalStatus = this.options.failWith ? "failed" : "done";
    const transform = this.options.transform ?? identityTransform;
    this.jobs.set(id, {
      doc: {
        id,
        status: "queued",
        stage: this.options.failWith?.stage ?? null,
        error: this.options.failWith
          ? `[${this.options.failWith.stage}] ${this.options.failWith.error}`
          : null,
      },
      script: [...pending, finalStatus],
      polls: 0,
      result: transform(image, mask),
    });
    return { job_id: id };
  }

  async get(path: string): Promise<any> {
    if (path === "/v1/healthz") return { status: "ok" };
    if (path.startsWith("/v1/segments")) {
      const segs = this.options.segments ?? [];
      if (segs.length === 0) throw new Error("no segments configured");
      const [h, w] = segs[0].rle_mask.size;
      return { height: h, width: w, segments: segs };
    }
    const match = path.match(/^\/v1\/jobs\/(.+)$/);
    if (!match) throw new Error(`unexpected GET ${path}`);
    const job = this.jobs.get(match[1]);
    if (!job) throw new Error(`no job ${match[1]}`);
    const idx = Math.min(job.polls, job.script.length - 1);
    job.polls++;
    const status = job.script[idx];
    const doc: JobDoc = { ...job.doc, status };
    if (status === "done") doc.result_b64 = jsonCodec.encode(job.result);
    if (status !== "failed") doc.error = null;
    else doc.error = job.doc.error;
    return doc;
  }
}

export function flatImage(width: number, height: number, value = 128): RawImage {
  const pixels = new Uint8ClampedArray(4 * width * height);
  for (let i = 0; i < width * height; i++) {
    pixels[4 * i] = value;
    pixels[4 * i + 1] = value;
    pixels[4 * i + 2] = value;
    pixels[4 * i + 3] = 255;
  }
  return { width, height, pixels };
}
