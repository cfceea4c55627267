/**
 * The editing session: one base image, a mask being built up by brush
 * strokes and click-selected segments, bounded undo/redo history, and
 * the submit -> poll -> adopt cycle against the erase service.
 *
 * State machine: submit is legal only in "idle"; adopt only in
 * "job-done". Network traffic never touches the image, the mask, or the
 * history; only adoptResult does, explicitly.
 */

import { EraserApi, JobDoc, SegmentDoc } from "./client.js";
import {
  Brush,
  Point,
  RawImage,
  cloneImage,
  emptyMask,
  maskArea,
  paintStroke,
  unionInto,
} from "./mask.js";
import { decodeRle, encodeRle } from "./rle.js";

export type SessionState = "idle" | "submitting" | "polling" | "job-done" | "error";

/** Encoding between raw pixel buffers and the wire's base64 PNGs.
 * decode may be asynchronous (browser PNG decode is). */
export interface ImageCodec {
  encode(img: RawImage): string;
  decode(b64: string): RawImage | Promise<RawImage>;
}

export interface SessionOptions {
  api: EraserApi;
  codec: ImageCodec;
  /** Injectable sleep so tests can run the poll loop instantly. */
  delay?: (ms: number) => Promise<void>;
  maxHistory?: number;
  pollIntervalMs?: number;
  pollBackoff?: number;
  pollMaxIntervalMs?: number;
  /** Segment kinds the click tool may select. */
  selectableKinds?: Set<string>;
}

interface Snapshot {
  image: RawImage;
  painted: Uint8Array;
  selected: Map<number, Uint8Array>;
}

const DEFAULT_BRUSH: Brush = { radius: 8, mode: "paint" };

export class CanvasSession {
  image: RawImage;
  painted: Uint8Array;
  brush: Brush = { ...DEFAULT_BRUSH };
  state: SessionState = "idle";
  activeJobId: string | null = null;
  pendingResult: RawImage | null = null;
  lastError: string | null = null;
  hint: string | null = null;

  private selected = new Map<number, Uint8Array>();
  private segments: SegmentDoc[] | null = null;
  private history: Snapshot[] = [];
  private redoStack: Snapshot[] = [];

  private readonly api: EraserApi;
  private readonly codec: ImageCodec;
  private readonly delay: (ms: number) => Promise<void>;
  private readonly maxHistory: number;
  private readonly pollIntervalMs: number;
  private readonly pollBackoff: number;
  private readonly pollMaxIntervalMs: number;
  private readonly selectableKinds: Set<string>;

  constructor(image: RawImage, options: SessionOptions) {
    this.image = cloneImage(image);
    this.painted = emptyMask(image.width, image.height);
    this.api = options.api;
    this.codec = options.codec;
    this.delay = options.delay ?? ((ms) => new Promise((r) => setTimeout(r, ms)));
    this.maxHistory = options.maxHistory ?? 20;
    this.pollIntervalMs = options.pollIntervalMs ?? 1000;
    this.pollBackoff = options.pollBackoff ?? 1.5;
    this.pollMaxIntervalMs = options.pollMaxIntervalMs ?? 5000;
    this.selectableKinds = options.selectableKinds ?? new Set(["thing"]);
  }

  get width(): number {
    return this.image.width;
  }

  get height(): number {
    return this.image.height;
  }

  /** The mask that would ship: brush strokes plus selected segments. */
  mask(): Uint8Array {
    const out = new Uint8Array(this.painted);
    for (const segMask of this.selected.values()) unionInto(out, segMask);
    return out;
  }

  maskEmpty(): boolean {
    return maskArea(this.mask()) === 0;
  }

  // -- history -------------------------------------------------------------

  private snapshot(): Snapshot {
    return {
      image: cloneImage(this.image),
      painted: new Uint8Array(this.painted),
      selected: new Map(
        [...this.selected].map(([id, m]) => [id, new Uint8Array(m)]),
      ),
    };
  }

  private restore(snap: Snapshot): void {
    this.image = cloneImage(snap.image);
    this.painted = new Uint8Array(snap.painted);
    this.selected = new Map(
      [...snap.selected].map(([id, m]) => [id, new Uint8Array(m)]),
    );
  }

  private pushHistory(): void {
    this.history.push(this.snapshot());
    if (this.history.length > this.maxHistory) this.history.shift();
    this.redoStack = [];
  }

  get historyDepth(): number {
    return this.history.length;
  }

  canUndo(): boolean {
    return this.history.length > 0;
  }

  canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): boolean {
    const snap = this.history.pop();
    if (!snap) return false;
    this.redoStack.push(this.snapshot());
    this.restore(snap);
    return true;
  }

  redo(): boolean {
    const snap = this.redoStack.pop();
    if (!snap) return false;
    this.history.push(this.snapshot());
    if (this.history.length > this.maxHistory) this.history.shift();
    this.restore(snap);
    return true;
  }

  // -- editing -------------------------------------------------------------

  paintStroke(path: Point[], brush?: Brush): void {
    if (path.length === 0) return;
    this.pushHistory();
    paintStroke(this.painted, this.width, this.height, path, brush ?? this.brush);
  }

  /** Fetch and cache the panoptic segments for click-to-select. */
  async fetchSegments(): Promise<SegmentDoc[]> {
    const doc = await this.api.getSegments(this.codec.encode(this.image));
    if (doc.height !== this.height || doc.width !== this.width) {
      throw new Error(
        `segments are ${doc.height}x${doc.width}, image is ${this.height}x${this.width}`,
      );
    }
    this.segments = doc.segments;
    return doc.segments;
  }

  get segmentsFetched(): boolean {
    return this.segments !== null;
  }

  /**
   * Toggle the segment under the point into/out of the mask. Returns
   * true if the mask changed; clicks on non-selectable regions leave a
   * hint instead.
   */
  clickSelect(point: Point): boolean {
    if (!this.segments) {
      throw new Error("segments not fetched");
    }
    this.hint = null;
    const idx = Math.floor(point.y) * this.width + Math.floor(point.x);
    if (point.x < 0 || point.y < 0 || point.x >= this.width || point.y >= this.height) {
      this.hint = "click inside the image";
      return false;
    }
    for (const seg of this.segments) {
      const segMask = decodeRle(seg.rle_mask);
      if (!segMask[idx]) continue;
      if (!this.selectableKinds.has(seg.kind)) {
        this.hint = `"${seg.category}" is background; paint it instead`;
        return false;
      }
      this.pushHistory();
      if (this.selected.has(seg.id)) {
        this.selected.delete(seg.id);
      } else {
        this.selected.set(seg.id, segMask);
      }
      return true;
    }
    this.hint = "nothing selectable here";
    return false;
  }

  selectedSegmentIds(): number[] {
    return [...this.selected.keys()].sort((a, b) => a - b);
  }

  // -- the erase cycle -----------------------------------------------------

  canSubmit(): boolean {
    return this.state === "idle" && !this.maskEmpty();
  }

  /**
   * Submit the current mask and poll until the job settles. Polling
   * starts at pollIntervalMs and backs off geometrically up to the cap.
   * Resolves with the final job record; the session lands in
   * "job-done" (result pending adoption) or "error".
   */
  async submitAndTrack(
    config?: Record<string, unknown>,
    onStatus?: (job: JobDoc) => void,
  ): Promise<JobDoc> {
    if (this.state !== "idle") {
      throw new Error(`submit is only legal in idle state, not ${this.state}`);
    }
    if (this.maskEmpty()) {
      throw new Error("mask is empty");
    }
    this.state = "submitting";
    this.lastError = null;
    try {
      const maskRle = encodeRle(this.mask(), this.height, this.width);
      const jobId = await this.api.submitErase(
        this.codec.encode(this.image), maskRle, config,
      );
      this.activeJobId = jobId;
      this.state = "polling";

      let interval = this.pollIntervalMs;
      for (;;) {
        const job = await this.api.getJob(jobId);
        onStatus?.(job);
        if (job.status === "done") {
          this.pendingResult = await this.codec.decode(job.result_b64!);
          this.state = "job-done";
          return job;
        }
        if (job.status === "failed") {
          // the server's stage-tagged message, verbatim
          this.lastError = job.error ?? "job failed";
          this.state = "error";
          return job;
        }
        await this.delay(interval);
        interval = Math.min(interval * this.pollBackoff, this.pollMaxIntervalMs);
      }
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
      this.state = "error";
      throw err;
    }
  }

  /**
   * Adopt the finished result as the new base image, clearing the mask
   * so the next erase round starts fresh. The only place a server
   * response mutates local state.
   */
  adoptResult(): void {
    if (this.state !== "job-done" || !this.pendingResult) {
      throw new Error(`adopt is only legal in job-done state, not ${this.state}`);
    }
    this.pushHistory();
    this.image = this.pendingResult;
    this.painted = emptyMask(this.width, this.height);
    this.selected = new Map();
    this.segments = null; // stale for the new base image
    this.pendingResult = null;
    this.activeJobId = null;
    this.state = "idle";
  }

  /** Drop a failed or unwanted job and return to editing. */
  dismissJob(): void {
    if (this.state === "submitting" || this.state === "polling") {
      throw new Error("cannot dismiss while the job is in flight");
    }
    this.pendingResult = null;
    this.activeJobId = null;
    this.lastError = null;
    this.state = "idle";
  }
}
