/**
 * Browser wiring: canvas painting, click-to-select, job submission and
 * the before/after comparison slider. All editing logic lives in
 * CanvasSession; this file only translates DOM events.
 */

import { EraserApi, FetchHttp } from "./client.js";
import { RawImage } from "./mask.js";
import { CanvasSession, ImageCodec } from "./session.js";

const pngCodec: ImageCodec = {
  encode(img: RawImage): string {
    const canvas = document.createElement("canvas");
    canvas.width = img.width;
    canvas.height = img.height;
    canvas.getContext("2d")!.putImageData(
      new ImageData(new Uint8ClampedArray(img.pixels), img.width, img.height), 0, 0,
    );
    return canvas.toDataURL("image/png").split(",")[1];
  },
  async decode(b64: string): Promise<RawImage> {
    const img = new Image();
    img.src = `data:image/png;base64,${b64}`;
    await img.decode();
    const canvas = document.createElement("canvas");
    canvas.width = img.naturalWidth;
    canvas.height = img.naturalHeight;
    const ctx = canvas.getContext("2d")!;
    ctx.drawImage(img, 0, 0);
    const data = ctx.getImageData(0, 0, canvas.width, canvas.height);
    return { width: canvas.width, height: canvas.height, pixels: data.data };
  },
};

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function blendSplit(a: RawImage, b: RawImage, t: number): RawImage {
  // left of the split shows the old base, right shows the result
  const out = new Uint8ClampedArray(a.pixels);
  const split = Math.floor(a.width * t);
  for (let y = 0; y < a.height; y++) {
    for (let x = split; x < a.width; x++) {
      const i = 4 * (y * a.width + x);
      out[i] = b.pixels[i];
      out[i + 1] = b.pixels[i + 1];
      out[i + 2] = b.pixels[i + 2];
      out[i + 3] = 255;
    }
  }
  return { width: a.width, height: a.height, pixels: out };
}

function start() {
  // ?api=http://host:port overrides the same-origin default
  const apiBase = new URLSearchParams(location.search).get("api") ?? "";
  const api = new EraserApi(new FetchHttp(apiBase));
  const fileInput = el<HTMLInputElement>("file");
  const canvas = el<HTMLCanvasElement>("editor");
  const ctx = canvas.getContext("2d")!;
  const radius = el<HTMLInputElement>("radius");
  const tools: Record<string, HTMLButtonElement> = {
    paint: el<HTMLButtonElement>("mode-paint"),
    erase: el<HTMLButtonElement>("mode-erase"),
    select: el<HTMLButtonElement>("mode-select"),
  };
  const submitBtn = el<HTMLButtonElement>("submit");
  const adoptBtn = el<HTMLButtonElement>("adopt");
  const dismissBtn = el<HTMLButtonElement>("dismiss");
  const undoBtn = el<HTMLButtonElement>("undo");
  const redoBtn = el<HTMLButtonElement>("redo");
  const statusBar = el<HTMLDivElement>("status");
  const slider = el<HTMLInputElement>("compare");

  let session: CanvasSession | null = null;
  let tool: "paint" | "erase" | "select" = "paint";
  let stroke: { x: number; y: number }[] = [];

  function render() {
    if (!session) return;
    canvas.width = session.width;
    canvas.height = session.height;
    const comparing = session.state === "job-done" && session.pendingResult;
    const base = comparing
      ? blendSplit(session.image, session.pendingResult!, Number(slider.value) / 100)
      : session.image;
    ctx.putImageData(
      new ImageData(new Uint8ClampedArray(base.pixels), base.width, base.height),
      0, 0,
    );
    if (!comparing) {
      const mask = session.mask();
      const overlay = ctx.getImageData(0, 0, canvas.width, canvas.height);
      for (let i = 0; i < mask.length; i++) {
        if (mask[i]) {
          overlay.data[4 * i] = Math.min(255, overlay.data[4 * i] + 90);
          overlay.data[4 * i + 3] = 255;
        }
      }
      ctx.putImageData(overlay, 0, 0);
    }
    submitBtn.disabled = !session.canSubmit();
    adoptBtn.disabled = session.state !== "job-done";
    dismissBtn.disabled = session.state !== "job-done" && session.state !== "error";
    undoBtn.disabled = !session.canUndo();
    redoBtn.disabled = !session.canRedo();
    slider.style.display = comparing ? "inline-block" : "none";
    statusBar.textContent =
      session.lastError ?? session.hint ?? `state: ${session.state}`;
  }

  function canvasPoint(ev: PointerEvent) {
    const rect = canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * canvas.width,
      y: ((ev.clientY - rect.top) / rect.height) * canvas.height,
    };
  }

  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    let binary = "";
    bytes.forEach((b) => (binary += String.fromCharCode(b)));
    const img = await pngCodec.decode(btoa(binary));
    session = new CanvasSession(img, { api, codec: pngCodec });
    render();
  });

  for (const [name, btn] of Object.entries(tools)) {
    btn.addEventListener("click", async () => {
      tool = name as typeof tool;
      if (tool === "select" && session && !session.segmentsFetched) {
        statusBar.textContent = "fetching segments...";
        try {
          await session.fetchSegments();
        } catch (err) {
          statusBar.textContent = String(err);
        }
      }
      render();
    });
  }

  canvas.addEventListener("pointerdown", (ev) => {
    if (!session || (session.state !== "idle" && session.state !== "error")) return;
    const point = canvasPoint(ev);
    if (tool === "select") {
      session.clickSelect(point);
      render();
      return;
    }
    stroke = [point];
  });

  canvas.addEventListener("pointermove", (ev) => {
    if (stroke.length > 0) stroke.push(canvasPoint(ev));
  });

  window.addEventListener("pointerup", () => {
    if (!session || stroke.length === 0) return;
    session.paintStroke(stroke, {
      radius: Number(radius.value),
      mode: tool === "erase" ? "erase" : "paint",
    });
    stroke = [];
    render();
  });

  submitBtn.addEventListener("click", async () => {
    if (!session) return;
    try {
      await session.submitAndTrack(undefined, (job) => {
        statusBar.textContent = `job ${job.id}: ${job.status}`;
      });
    } catch (err) {
      statusBar.textContent = String(err);
    }
    render();
  });

  adoptBtn.addEventListener("click", () => {
    session?.adoptResult();
    slider.value = "50";
    render();
  });
  dismissBtn.addEventListener("click", () => {
    session?.dismissJob();
    render();
  });
  undoBtn.addEventListener("click", () => {
    session?.undo();
    render();
  });
  redoBtn.addEventListener("click", () => {
    session?.redo();
    render();
  });
  slider.addEventListener("input", render);
}

start();
