/**
 * Thin typed client for the erase service HTTP API. Transport is
 * injectable so tests run against an in-process stub.
 */

import type { RleMask } from "./rle.js";

export interface SegmentDoc {
  id: number;
  category: string;
  kind: "thing" | "stuff";
  rle_mask: RleMask;
}

export interface SegmentsResponse {
  height: number;
  width: number;
  segments: SegmentDoc[];
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobDoc {
  id: string;
  status: JobStatus;
  stage?: string | null;
  error?: string | null;
  result_b64?: string;
  config_flat?: Record<string, unknown>;
}

export interface HttpJson {
  post(path: string, body: unknown): Promise<any>;
  get(path: string): Promise<any>;
}

export class FetchHttp implements HttpJson {
  constructor(private baseUrl: string) {}

  private async handle(resp: Response): Promise<any> {
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new Error(body.detail ?? `HTTP ${resp.status}`);
    }
    return body;
  }

  async post(path: string, body: unknown): Promise<any> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.handle(resp);
  }

  async get(path: string): Promise<any> {
    return this.handle(await fetch(this.baseUrl + path));
  }
}

export class EraserApi {
  constructor(private http: HttpJson) {}

  async submitErase(
    imageB64: string,
    maskRle: RleMask,
    config?: Record<string, unknown>,
  ): Promise<string> {
    const body: Record<string, unknown> = { image_b64: imageB64, mask_rle: maskRle };
    if (config) body.config = config;
    const doc = await this.http.post("/v1/erase", body);
    return doc.job_id as string;
  }

  async getJob(jobId: string): Promise<JobDoc> {
    return (await this.http.get(`/v1/jobs/${jobId}`)) as JobDoc;
  }

  async getSegments(imageB64: string): Promise<SegmentsResponse> {
    const query = encodeURIComponent(imageB64);
    return (await this.http.get(`/v1/segments?image=${query}`)) as SegmentsResponse;
  }

  async healthz(): Promise<boolean> {
    try {
      const doc = await this.http.get("/v1/healthz");
      return doc.status === "ok";
    } catch {
      return false;
    }
  }
}
