"""Erase-pipeline orchestration and the persistent job queue.

One erase request runs: panoptic segmentation -> label map -> coarse
content initialization -> partial re-noising at T' = floor(T * s) ->
refocused denoising under the tuned prompt -> decode -> feathered
composite back onto the input. Pixels beyond the feather band are
bit-identical to the input by construction.

Jobs run strictly FIFO on a single worker. The store is an append-only
event log with snapshot compaction; restarting retains queued jobs and
fails whatever was running at the crash.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .clients import MeanFillInpainter, PaletteSegmenter, ToyVae
from .config import ErasureConfig
from .diffusion import (
    ConditioningBundle,
    content_initialize,
    denoise_loop,
    forward_noise,
    build_schedule,
    steps_from_strength,
)
from .errors import (
    EmptyMask,
    EncodeFailure,
    EraserError,
    NotFound,
    OversizeInput,
    QueueFull,
    SegmenterUnavailable,
    ShapeMismatch,
    StageError,
)
from .olrd import mask_to_latent
from .prompt_tuning import (
    LoraAdapter,
    PlaceholderToken,
    build_simple_prompt,
    init_token,
    load_checkpoint,
    rank_background_tags,
)
from .refocus import RefocusHook, build_label_map
from .synth import PALETTE
from .toy import ToyDenoiser, ToyTextEncoder


@dataclass
class ClientSet:
    """Everything the pipeline talks to, bundled for injection."""

    denoiser: ToyDenoiser
    encoder: ToyTextEncoder
    vae: ToyVae
    inpainter: object
    segmenter: object
    token: PlaceholderToken | None = None
    adapters: dict[str, LoraAdapter] | None = None


def desk_clients(seed: int = 0, model_dir: str | None = None) -> ClientSet:
    """The laptop-scale client set: toy model, stub externals.

    ``model_dir`` (or $ERASER_MODEL_DIR) may hold training checkpoints;
    the newest one supplies the tuned token and adapters. $ERASER_DEVICE
    is accepted for interface parity; only "cpu" exists here.
    """
    device = os.environ.get("ERASER_DEVICE", "cpu")
    if device not in ("", "cpu"):
        raise EraserError(f"unsupported device {device!r}; this runtime is cpu-only")
    encoder = ToyTextEncoder(seed=seed)
    token, adapters = None, None
    model_dir = model_dir or os.environ.get("ERASER_MODEL_DIR")
    if model_dir:
        checkpoints = sorted(Path(model_dir).glob("step_*.npz"))
        if checkpoints:
            token, adapters, _, _ = load_checkpoint(checkpoints[-1])
    if token is None:
        token = init_token(encoder)
    return ClientSet(
        denoiser=ToyDenoiser(seed=seed),
        encoder=encoder,
        vae=ToyVae(),
        inpainter=MeanFillInpainter(),
        segmenter=PaletteSegmenter(PALETTE),
        token=token,
        adapters=adapters,
    )


def embed_prompt(encoder: ToyTextEncoder, prompt: str, token: PlaceholderToken | None):
    rows = encoder.encode(prompt)
    if token is not None:
        for pos in encoder.placeholder_positions(prompt):
            rows[pos] = token.embedding
    return rows


def _pad_to_multiple(arr: np.ndarray, factor: int) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = arr.shape[:2]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph == 0 and pw == 0:
        return arr, (0, 0)
    pads = ((0, ph), (0, pw)) + ((0, 0),) * (arr.ndim - 2)
    return np.pad(arr, pads, mode="edge"), (ph, pw)


def feather_weights(mask: np.ndarray, feather_px: int) -> np.ndarray:
    """1 inside the mask, linear falloff over feather_px, exactly 0 beyond."""
    inside = mask > 0
    if feather_px <= 0:
        return inside.astype(np.float64)
    dist = ndimage.distance_transform_edt(~inside)
    return np.clip(1.0 - dist / (feather_px + 1e-12), 0.0, 1.0)


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


def erase(
    image: np.ndarray,
    user_mask: np.ndarray,
    config: ErasureConfig,
    clients: ClientSet,
) -> np.ndarray:
    """Run the full pipeline on one image; returns a uint8 RGB array."""
    img = np.asarray(image)
    mask = np.asarray(user_mask)
    if mask.ndim == 3:
        mask = mask[:, :, 0]
    mask = (mask > 0).astype(np.uint8)
    if mask.shape != img.shape[:2]:
        raise ShapeMismatch(f"mask {mask.shape} does not match image {img.shape[:2]}")
    if not mask.any():
        raise EmptyMask("erase mask selects no pixels")
    if max(img.shape[:2]) > config.max_side:
        raise OversizeInput(
            f"long side {max(img.shape[:2])} exceeds limit {config.max_side}"
        )

    work_img, _ = _pad_to_multiple(img, clients.vae.factor)
    work_mask, _ = _pad_to_multiple(mask, clients.vae.factor)

    scene = _stage("segment", clients.segmenter.panoptic, work_img)
    label_map = _stage("segment", build_label_map, scene.segments, work_mask)

    try:
        z_clean = content_initialize(
            work_img, work_mask, clients.inpainter, clients.vae
        )
    except EncodeFailure as exc:
        raise StageError("encode", exc) from exc
    except Exception as exc:
        raise StageError("init", exc) from exc

    schedule = build_schedule(config.T)
    t_prime = steps_from_strength(config.T, config.strength)
    rng = np.random.default_rng(config.sampler_seed)
    eps0 = rng.standard_normal(z_clean.z.shape)
    z_noisy = forward_noise(z_clean, t_prime, schedule, eps0)

    tags = rank_background_tags(scene.stuff(), work_mask) or ["background"]
    prompt = build_simple_prompt(tags)
    emb_cond = embed_prompt(clients.encoder, prompt, clients.token)
    emb_uncond = embed_prompt(clients.encoder, "", clients.token)

    masked_img = np.where((work_mask > 0)[:, :, None], 0, work_img)
    z_masked = _stage("encode", clients.vae.encode, masked_img)
    latent_mask = mask_to_latent(work_mask, clients.vae.factor)
    cond = ConditioningBundle(
        z_masked=z_masked, mask=latent_mask, text_embedding=emb_cond
    )

    adapters = clients.adapters
    guidance = config.guidance_scale

    def guided_denoiser(x9, t, text_embedding, attn_hook=None):
        eps_c = clients.denoiser.predict(
            x9, t, text_embedding, adapters=adapters, attn_hook=attn_hook
        )
        if guidance == 1.0:
            return eps_c
        eps_u = clients.denoiser.predict(
            x9, t, emb_uncond, adapters=adapters, attn_hook=attn_hook
        )
        return eps_u + guidance * (eps_c - eps_u)

    hook = RefocusHook(label_map, config.refocus) if config.refocus.enabled else None
    z_final = _stage(
        "denoise", denoise_loop, z_noisy, cond, schedule, guided_denoiser, hook
    )

    decoded = _stage("decode", clients.vae.decode, z_final.z)

    def composite():
        dec = decoded[: img.shape[0], : img.shape[1]]
        weights = feather_weights(mask, config.feather_px)
        out = img.copy()
        band = weights > 0
        mixed = (
            dec[band].astype(np.float64) * weights[band, None]
            + img[band].astype(np.float64) * (1.0 - weights[band, None])
        )
        out[band] = np.clip(np.round(mixed), 0, 255).astype(np.uint8)
        return out

    return _stage("composite", composite)


# ---------------------------------------------------------------------------
# job store


@dataclass
class ErasureJob:
    id: str
    status: str  # queued -> running -> done | failed
    config_flat: dict
    config_hash: str
    submitted_at: float
    started_at: float | None = None
    finished_at: float | None = None
    stage: str | None = None
    error: str | None = None
    completed_config_hash: str | None = None
    timings: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


_VALID_TRANSITIONS = {
    ("queued", "running"),
    ("running", "done"),
    ("running", "failed"),
}


class JobStore:
    """Append-only event log with snapshot compaction.

    Images live as PNG files next to the log so the log stays small.
    Loading replays snapshot.json plus log.jsonl; jobs found "running"
    after a restart are marked failed with RestartInterrupted.
    """

    COMPACT_AFTER = 200

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.RLock()
        self.jobs: dict[str, ErasureJob] = {}
        self._log_events = 0
        self._recover()

    # -- persistence --

    @property
    def _snapshot_path(self) -> Path:
        return self.dir / "snapshot.json"

    @property
    def _log_path(self) -> Path:
        return self.dir / "log.jsonl"

    def _recover(self):
        if self._snapshot_path.exists():
            snap = json.loads(self._snapshot_path.read_text())
            for doc in snap["jobs"]:
                self.jobs[doc["id"]] = ErasureJob(**doc)
        if self._log_path.exists():
            for line in self._log_path.read_text().splitlines():
                if not line.strip():
                    continue
                event = json.loads(line)
                self._apply(event)
                self._log_events += 1
        for job in self.jobs.values():
            if job.status == "running":
                job.status = "failed"
                job.error = "RestartInterrupted"
                job.finished_at = time.time()
                self._append({"type": "update", "job": job.to_json()})

    def _apply(self, event: dict):
        doc = event["job"]
        self.jobs[doc["id"]] = ErasureJob(**doc)

    def _append(self, event: dict):
        with self._log_path.open("a") as f:
            f.write(json.dumps(event) + "\n")
        self._log_events += 1
        if self._log_events >= self.COMPACT_AFTER:
            self.compact()

    def compact(self):
        with self.lock:
            snap = {"jobs": [j.to_json() for j in self.jobs.values()]}
            tmp = self._snapshot_path.with_suffix(".tmp")
            tmp.write_text(json.dumps(snap))
            tmp.replace(self._snapshot_path)
            self._log_path.write_text("")
            self._log_events = 0

    # -- mutations --

    def put_new(self, job: ErasureJob):
        with self.lock:
            self.jobs[job.id] = job
            self._append({"type": "submit", "job": job.to_json()})

    def update(self, job: ErasureJob, new_status: str | None = None):
        with self.lock:
            if new_status is not None:
                if (job.status, new_status) not in _VALID_TRANSITIONS:
                    raise ValueError(
                        f"illegal transition {job.status} -> {new_status}"
                    )
                job.status = new_status
            self.jobs[job.id] = job
            self._append({"type": "update", "job": job.to_json()})

    def get(self, job_id: str) -> ErasureJob:
        with self.lock:
            if job_id not in self.jobs:
                raise NotFound(f"no job {job_id}")
            return self.jobs[job_id]

    def all_jobs(self) -> list[ErasureJob]:
        with self.lock:
            return sorted(self.jobs.values(), key=lambda j: j.submitted_at)

    # -- image payloads --

    def write_image(self, job_id: str, name: str, array: np.ndarray):
        Image.fromarray(array).save(self.dir / f"{job_id}_{name}.png")

    def read_image(self, job_id: str, name: str) -> np.ndarray:
        path = self.dir / f"{job_id}_{name}.png"
        if not path.exists():
            raise NotFound(f"no {name} image for job {job_id}")
        return np.array(Image.open(path))


class EraserService:
    """FIFO queue over one worker; the accelerator context is exclusive."""

    def __init__(self, store_dir, clients: ClientSet | None = None, queue_cap: int = 64):
        self.store = JobStore(store_dir)
        self.clients = clients or desk_clients()
        self.queue_cap = queue_cap
        self._worker: threading.Thread | None = None
        self._stop = threading.Event()

    # -- API surface --

    def submit_job(
        self, image: np.ndarray, mask: np.ndarray, config_flat: dict | None = None
    ) -> ErasureJob:
        config = ErasureConfig.from_flat(config_flat)
        queued = [j for j in self.store.all_jobs() if j.status == "queued"]
        if len(queued) >= self.queue_cap:
            raise QueueFull(f"{len(queued)} jobs already queued")
        if not (np.asarray(mask) > 0).any():
            raise EmptyMask("erase mask selects no pixels")
        job = ErasureJob(
            id=uuid.uuid4().hex[:12],
            status="queued",
            config_flat=config.to_flat(),
            config_hash=config.config_hash(),
            submitted_at=time.time(),
        )
        self.store.write_image(job.id, "input", np.asarray(image).astype(np.uint8))
        self.store.write_image(
            job.id, "mask", ((np.asarray(mask) > 0) * 255).astype(np.uint8)
        )
        self.store.put_new(job)
        return job

    def get_job(self, job_id: str) -> ErasureJob:
        return self.store.get(job_id)

    def list_jobs(self) -> list[ErasureJob]:
        return self.store.all_jobs()

    def get_result(self, job_id: str) -> np.ndarray:
        return self.store.read_image(job_id, "result")

    def segments(self, image: np.ndarray):
        try:
            return self.clients.segmenter.panoptic(image)
        except SegmenterUnavailable:
            raise
        except Exception as exc:
            raise SegmenterUnavailable(str(exc)) from exc

    # -- worker --

    def process_next(self) -> ErasureJob | None:
        """Run the oldest queued job to completion; None when idle."""
        with self.store.lock:
            queued = [j for j in self.store.all_jobs() if j.status == "queued"]
            if not queued:
                return None
            job = queued[0]
            job.started_at = time.time()
            self.store.update(job, "running")
        image = self.store.read_image(job.id, "input")
        mask = (self.store.read_image(job.id, "mask") > 127).astype(np.uint8)
        config = ErasureConfig.from_flat(job.config_flat)
        try:
            t0 = time.time()
            result = erase(image, mask, config, self.clients)
            job.timings["erase_s"] = time.time() - t0
            self.store.write_image(job.id, "result", result)
            job.finished_at = time.time()
            job.completed_config_hash = config.config_hash()
            self.store.update(job, "done")
        except StageError as exc:
            job.finished_at = time.time()
            job.stage = exc.stage
            job.error = str(exc)
            self.store.update(job, "failed")
        except EraserError as exc:
            job.finished_at = time.time()
            job.stage = job.stage or "init"
            job.error = str(exc)
            self.store.update(job, "failed")
        return job

    def drain(self):
        while self.process_next() is not None:
            pass

    def start_worker(self, poll_s: float = 0.05):
        if self._worker is not None:
            return

        def loop():
            while not self._stop.is_set():
                if self.process_next() is None:
                    self._stop.wait(poll_s)

        self._worker = threading.Thread(target=loop, daemon=True)
        self._worker.start()

    def stop_worker(self):
        self._stop.set()
        if self._worker is not None:
            self._worker.join(timeout=5)
            self._worker = None
        self._stop.clear()
