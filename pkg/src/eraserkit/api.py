"""HTTP JSON API over the eraser service.

    POST /v1/erase      {image_b64, mask_rle, config?} -> {job_id}
    GET  /v1/jobs/{id}  -> job record, result_b64 when done
    GET  /v1/segments   ?image=<b64 png> -> panoptic segment list
    GET  /v1/healthz

Images travel as base64-encoded PNG; masks as uncompressed row-major RLE.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image
from pydantic import BaseModel

from .errors import EmptyMask, EraserError, NotFound, QueueFull, SegmenterUnavailable
from .panoptic import segments_to_json
from .rle import decode_rle
from .service import EraserService


class EraseRequest(BaseModel):
    image_b64: str
    mask_rle: dict
    config: dict | None = None


def _decode_image(b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64)
        return np.array(Image.open(io.BytesIO(raw)).convert("RGB"))
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"bad image payload: {exc}")


def _encode_image(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def build_app(service: EraserService) -> FastAPI:
    app = FastAPI(title="eraserkit")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.service = service

    @app.post("/v1/erase")
    def submit(req: EraseRequest):
        image = _decode_image(req.image_b64)
        try:
            mask = decode_rle(req.mask_rle)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"bad mask RLE: {exc}")
        if mask.shape != image.shape[:2]:
            raise HTTPException(
                status_code=400,
                detail=f"mask {mask.shape} does not match image {image.shape[:2]}",
            )
        try:
            job = service.submit_job(image, mask, req.config)
        except EmptyMask as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except QueueFull as exc:
            raise HTTPException(status_code=429, detail=str(exc))
        except EraserError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"job_id": job.id}

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            job = service.get_job(job_id)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        doc = job.to_json()
        if job.status == "done":
            doc["result_b64"] = _encode_image(service.get_result(job_id))
        return doc

    @app.get("/v1/jobs")
    def list_jobs():
        return [job.to_json() for job in service.list_jobs()]

    @app.get("/v1/segments")
    def segments(image: str = Query(...)):
        arr = _decode_image(image)
        try:
            scene = service.segments(arr)
        except SegmenterUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc))
        return {
            "height": int(arr.shape[0]),
            "width": int(arr.shape[1]),
            "segments": segments_to_json(scene.segments),
        }

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok"}

    return app
