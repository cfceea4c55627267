"""Learning the background-completion concept.

A placeholder literal ``R_*`` gets a trainable embedding row, optimized
jointly with low-rank adapters on the denoiser's attention projections
against the 9-channel inpainting objective

    loss = E[ || eps - eps_theta(concat(z_t, z_masked, m), t, tau(y)) ||^2 ]

with the base weights frozen throughout. Prompts alternate between the
constructed "A photo of R_* <tag>" form and the dataset caption, each
drawn with 50% probability per sample.

Training is deterministic: every step derives its sample order, prompt
coin, step index t and noise eps from (seed, step) alone, so resuming
from a checkpoint reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autograd import Tensor
from .diffusion import NoiseSchedule
from .errors import (
    CheckpointWriteFailure,
    CorruptDataset,
    NoBackgroundTag,
    NonFiniteLoss,
    ShapeMismatch,
)
from .toy import ATTN_PROJECTIONS, PLACEHOLDER_LITERAL, ToyDenoiser, ToyTextEncoder

CHECKPOINT_VERSION = 1

# the up factor creeps under Adam's per-step cap, so the product draws its
# scale from a wide down-projection init
DOWN_INIT_STD = 1.5

# deterministic warm start for the placeholder before any inversion steps
SEED_WORDS = ("background", "scenery")


@dataclass
class PlaceholderToken:
    """The new-concept token: literal string plus its embedding row."""

    literal: str = PLACEHOLDER_LITERAL
    embedding: np.ndarray = None
    trainable: bool = True

    def __post_init__(self):
        if self.embedding is None:
            raise ValueError("embedding must be provided")
        self.embedding = np.asarray(self.embedding, dtype=np.float64).reshape(-1)


@dataclass
class LoraAdapter:
    """Additive low-rank delta on one frozen weight: delta = scale * up @ down."""

    target_layer_id: str
    down: np.ndarray  # (rank, d_in)
    up: np.ndarray  # (d_out, rank)
    rank: int
    scale: float = 1.0

    def __post_init__(self):
        self.down = np.asarray(self.down, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if self.down.shape[0] != self.rank or self.up.shape[1] != self.rank:
            raise ShapeMismatch(
                f"factor shapes {self.up.shape}x{self.down.shape} disagree with "
                f"rank {self.rank}"
            )

    @property
    def d_in(self) -> int:
        return self.down.shape[1]

    @property
    def d_out(self) -> int:
        return self.up.shape[0]

    @property
    def param_count(self) -> int:
        return self.rank * (self.d_in + self.d_out)

    def delta(self) -> np.ndarray:
        return self.scale * (self.up @ self.down)


def apply_lora(base_weight: np.ndarray, adapter: LoraAdapter) -> np.ndarray:
    """base + scale * (up @ down); shapes must agree exactly."""
    delta = adapter.delta()
    if delta.shape != base_weight.shape:
        raise ShapeMismatch(
            f"LoRA delta {delta.shape} does not fit base {base_weight.shape}"
        )
    return base_weight + delta


def init_adapters(
    d_model: int,
    rank: int = 4,
    scale: float = 1.0,
    targets: Sequence[str] = ATTN_PROJECTIONS,
    seed: int = 0,
    down_init_std: float = DOWN_INIT_STD,
) -> dict[str, LoraAdapter]:
    """Fresh adapters: random down, zero up, so the delta starts at zero."""
    rng = np.random.default_rng(seed)
    return {
        name: LoraAdapter(
            target_layer_id=name,
            down=rng.normal(0.0, down_init_std, (rank, d_model)),
            up=np.zeros((d_model, rank)),
            rank=rank,
            scale=scale,
        )
        for name in targets
    }


@dataclass
class TrainSample:
    """One training record in latent space."""

    z0: np.ndarray  # (h, w, 4)
    z_masked: np.ndarray  # (h, w, 4)
    mask: np.ndarray  # (h, w) binary
    simple_prompt: str
    caption_prompt: str

    def __post_init__(self):
        if not self.simple_prompt or not self.caption_prompt:
            raise ValueError("prompts must be non-empty")
        if self.z0.shape != self.z_masked.shape:
            raise ShapeMismatch("z0 and z_masked must agree")
        if self.mask.shape != self.z0.shape[:2]:
            raise ShapeMismatch("mask must match latent spatial dims")
        if not np.all(np.isin(np.unique(self.mask), (0, 1))):
            raise ValueError("mask values must be in {0, 1}")


def build_simple_prompt(background_tags: Sequence[str]) -> str:
    """The short inference prompt; the first tag wins.

    Callers order the candidate list by boundary adjacency to the erase
    mask (ties by larger segment area) -- see rank_background_tags.
    """
    tags = [t for t in background_tags if t]
    if not tags:
        raise NoBackgroundTag("background tag list is empty")
    return f"A photo of {PLACEHOLDER_LITERAL} {tags[0]}"


def rank_background_tags(segments, erase_mask: np.ndarray) -> list[str]:
    """Order stuff-category tags by boundary adjacency to the erase mask.

    Adjacency counts 4-neighbor pixel pairs straddling the segment and the
    mask; ties break toward larger total category area, then name.
    """
    erase = np.asarray(erase_mask) > 0
    up = np.zeros_like(erase)
    up[:-1] = erase[1:]
    down = np.zeros_like(erase)
    down[1:] = erase[:-1]
    left = np.zeros_like(erase)
    left[:, :-1] = erase[:, 1:]
    right = np.zeros_like(erase)
    right[:, 1:] = erase[:, :-1]
    neighbor_count = (
        up.astype(np.int64) + down.astype(np.int64)
        + left.astype(np.int64) + right.astype(np.int64)
    )

    adjacency: dict[str, int] = {}
    areas: dict[str, int] = {}
    for seg in segments:
        if seg.kind != "stuff":
            continue
        cells = seg.mask.astype(bool) & ~erase
        adjacency[seg.category] = adjacency.get(seg.category, 0) + int(
            neighbor_count[cells].sum()
        )
        areas[seg.category] = areas.get(seg.category, 0) + seg.area
    return sorted(adjacency, key=lambda c: (-adjacency[c], -areas[c], c))


def prompt_mix(sample: TrainSample, u: float) -> str:
    """50/50 coin between the constructed prompt and the caption."""
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must be in [0, 1), got {u}")
    return sample.simple_prompt if u < 0.5 else sample.caption_prompt


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam over a dict of named parameter arrays."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(params[key])
                self.v[key] = np.zeros_like(params[key])
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * g * g
            m_hat = self.m[key] / (1 - self.beta1**self.t)
            v_hat = self.v[key] / (1 - self.beta2**self.t)
            params[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": dict(self.m), "v": dict(self.v)}

    def load_state(self, state: dict):
        self.t = int(state["t"])
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}


# ---------------------------------------------------------------------------
# the objective


def _embed_prompt_trainable(
    encoder: ToyTextEncoder, prompt: str, v_star: Tensor
) -> Tensor:
    """Prompt embedding matrix with the placeholder rows wired to v_star."""
    rows = encoder.encode(prompt)
    positions = encoder.placeholder_positions(prompt)
    base = rows.copy()
    selector = np.zeros((rows.shape[0], 1))
    if positions.size:
        base[positions] = 0.0
        selector[positions] = 1.0
    return Tensor(base) + Tensor(selector).matmul(v_star)


def _trainable_tensors(token: PlaceholderToken, adapters: dict[str, LoraAdapter]):
    """Wrap current parameter values as gradient-accumulating leaves."""
    tens = {"v_star": Tensor(token.embedding.reshape(1, -1), requires_grad=True)}
    live = {}
    for name, ad in adapters.items():
        down = Tensor(ad.down, requires_grad=True)
        up = Tensor(ad.up, requires_grad=True)
        tens[f"{name}.down"] = down
        tens[f"{name}.up"] = up
        live[name] = LoraTensors(down=down, up=up, scale=ad.scale)
    return tens, live


@dataclass
class LoraTensors:
    down: Tensor
    up: Tensor
    scale: float


def training_step(
    batch: Sequence[TrainSample],
    token: PlaceholderToken,
    adapters: dict[str, LoraAdapter],
    schedule: NoiseSchedule,
    denoiser: ToyDenoiser,
    encoder: ToyTextEncoder,
    ts: Sequence[int],
    epses: Sequence[np.ndarray],
    prompts: Sequence[str] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """One evaluation of the objective with injected (t, eps) per sample.

    Returns the scalar loss and gradients for exactly the trainable set:
    the placeholder embedding and the adapter factors. The frozen base
    never sees a gradient; its arrays are not touched.
    """
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    if not (len(ts) == len(epses) == len(batch)):
        raise ShapeMismatch("ts and epses must align with the batch")
    if prompts is None:
        prompts = [s.simple_prompt for s in batch]

    tens, live = _trainable_tensors(token, adapters)
    total = None
    for sample, t, eps, prompt in zip(batch, ts, epses, prompts):
        if eps.shape != sample.z0.shape:
            raise ShapeMismatch(f"eps {eps.shape} != latent {sample.z0.shape}")
        abar = schedule.alpha_bar(int(t))
        z_t = np.sqrt(abar) * sample.z0 + np.sqrt(1.0 - abar) * eps
        x9 = np.concatenate([z_t, sample.z_masked, sample.mask[..., None]], axis=2)
        emb = _embed_prompt_trainable(encoder, prompt, tens["v_star"])
        pred = denoiser.forward(Tensor(x9), int(t), emb, adapters=live)
        diff = pred - Tensor(eps)
        term = (diff * diff).mean()
        total = term if total is None else total + term
    loss = total * (1.0 / len(batch))

    if not np.isfinite(loss.data):
        raise NonFiniteLoss(f"loss is {loss.data}")
    loss.backward()
    grads = {
        key: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for key, t in tens.items()
    }
    return float(loss.data), grads


def frozen_theta_gradients(denoiser: ToyDenoiser) -> dict[str, np.ndarray]:
    """Gradients of the base weights, zero by construction: the optimizer
    set is restricted to the placeholder and the adapters."""
    return {name: np.zeros_like(arr) for name, arr in denoiser.params.items()}


# ---------------------------------------------------------------------------
# trainer


@dataclass
class TrainConfig:
    steps: int = 500
    lr: float = 1e-4
    rank: int = 4
    lora_scale: float = 1.0
    batch_size: int = 2
    seed: int = 0
    checkpoint_every: int = 100
    down_init_std: float = DOWN_INIT_STD
    lora_targets: tuple = ATTN_PROJECTIONS

    def config_hash(self) -> str:
        """Hash of the trajectory-defining fields.

        The step budget and checkpoint cadence are excluded: resuming a
        checkpoint with a larger budget is the normal use.
        """
        doc = {k: list(v) if isinstance(v, tuple) else v for k, v in vars(self).items()}
        doc.pop("steps")
        doc.pop("checkpoint_every")
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True).encode()
        ).hexdigest()


@dataclass
class TrainResult:
    token: PlaceholderToken
    adapters: dict[str, LoraAdapter]
    losses: list[float] = field(default_factory=list)
    steps_run: int = 0


def init_token(encoder: ToyTextEncoder) -> PlaceholderToken:
    """Warm-start embedding: mean of the seed-word rows."""
    rows = [encoder.embedding_table[encoder.vocab[w]] for w in SEED_WORDS]
    return PlaceholderToken(embedding=np.mean(rows, axis=0))


def _step_draws(seed: int, step: int, n_samples: int, batch_size: int, T: int):
    """All randomness for one step, derived from (seed, step) alone."""
    rng = np.random.default_rng((seed, step))
    idx = rng.permutation(n_samples)[:batch_size]
    us = rng.random(batch_size)
    ts = rng.integers(1, T + 1, batch_size)
    return idx, us, ts, rng


def init_placeholder(
    ti_subset: Sequence[TrainSample],
    steps: int,
    encoder: ToyTextEncoder,
    denoiser: ToyDenoiser,
    schedule: NoiseSchedule,
    lr: float = 1e-4,
    seed: int = 0,
) -> PlaceholderToken:
    """Textual-inversion phase: only the placeholder embedding trains.

    The adapters stay at zero (absent); steps=0 returns the warm start
    untouched.
    """
    if len(ti_subset) == 0:
        raise CorruptDataset("textual-inversion subset is empty")
    token = init_token(encoder)
    optimizer = Adam(lr=lr)
    batch_size = min(2, len(ti_subset))
    for step in range(steps):
        idx, us, ts, rng = _step_draws(seed, step, len(ti_subset), batch_size, schedule.T)
        batch = [ti_subset[i] for i in idx]
        epses = [rng.normal(0.0, 1.0, s.z0.shape) for s in batch]
        prompts = [s.simple_prompt for s in batch]  # inversion always sees R_*
        loss, grads = training_step(
            batch, token, {}, schedule, denoiser, encoder, ts, epses, prompts
        )
        params = {"v_star": token.embedding.reshape(1, -1)}
        optimizer.step(params, {"v_star": grads["v_star"]})
        token.embedding = params["v_star"].reshape(-1)
    return token


def train(
    config: TrainConfig,
    samples: Sequence[TrainSample],
    encoder: ToyTextEncoder,
    denoiser: ToyDenoiser,
    schedule: NoiseSchedule,
    checkpoint_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    token: PlaceholderToken | None = None,
) -> TrainResult:
    """Joint optimization of the placeholder embedding and the adapters.

    Each sample drawn into a batch flips its own 50/50 prompt coin.
    Checkpoints land every ``checkpoint_every`` steps; training resumed
    from a checkpoint continues the exact trajectory of an uninterrupted
    run with the same seed.
    """
    if len(samples) == 0:
        raise CorruptDataset("training dataset is empty")
    d_model = 2 * denoiser.channels

    if resume_from is not None:
        token, adapters, optimizer, start_step = load_checkpoint(
            resume_from, expect_hash=config.config_hash()
        )
        optimizer.lr = config.lr
    else:
        if token is None:
            token = init_token(encoder)
        adapters = init_adapters(
            d_model,
            rank=config.rank,
            scale=config.lora_scale,
            targets=config.lora_targets,
            seed=config.seed,
            down_init_std=config.down_init_std,
        )
        optimizer = Adam(lr=config.lr)
        start_step = 0

    batch_size = min(config.batch_size, len(samples))
    result = TrainResult(token=token, adapters=adapters)

    for step in range(start_step, config.steps):
        idx, us, ts, rng = _step_draws(
            config.seed, step, len(samples), batch_size, schedule.T
        )
        batch = [samples[i] for i in idx]
        epses = [rng.normal(0.0, 1.0, s.z0.shape) for s in batch]
        prompts = [prompt_mix(s, float(u)) for s, u in zip(batch, us)]
        loss, grads = training_step(
            batch, token, adapters, schedule, denoiser, encoder, ts, epses, prompts
        )
        params = {"v_star": token.embedding.reshape(1, -1)}
        for name, ad in adapters.items():
            params[f"{name}.down"] = ad.down
            params[f"{name}.up"] = ad.up
        optimizer.step(params, grads)
        token.embedding = params["v_star"].reshape(-1)

        result.losses.append(loss)
        result.steps_run = step + 1
        if checkpoint_dir is not None and (step + 1) % config.checkpoint_every == 0:
            write_checkpoint(
                Path(checkpoint_dir) / f"step_{step + 1:06d}.npz",
                token, adapters, optimizer, step + 1, config.config_hash(),
            )
    return result


def smoothed(losses: Sequence[float], window: int = 50) -> np.ndarray:
    """Trailing moving average of the loss telemetry."""
    arr = np.asarray(losses, dtype=np.float64)
    if arr.size < window:
        return arr.copy()
    kernel = np.ones(window) / window
    return np.convolve(arr, kernel, mode="valid")


# ---------------------------------------------------------------------------
# checkpoints


def write_checkpoint(path, token, adapters, optimizer, step, config_hash):
    path = Path(path)
    arrays = {"v_star": token.embedding}
    meta = {
        "version": CHECKPOINT_VERSION,
        "literal": token.literal,
        "step": int(step),
        "config_hash": config_hash,
        "targets": sorted(adapters),
        "adam_t": optimizer.t,
        "lr": optimizer.lr,
        "scales": {name: adapters[name].scale for name in adapters},
        "ranks": {name: adapters[name].rank for name in adapters},
    }
    for name, ad in adapters.items():
        arrays[f"adapter|{name}|down"] = ad.down
        arrays[f"adapter|{name}|up"] = ad.up
    for key, arr in optimizer.m.items():
        arrays[f"adam_m|{key}"] = arr
        arrays[f"adam_v|{key}"] = optimizer.v[key]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, meta=json.dumps(meta), **arrays)
    except OSError as exc:
        raise CheckpointWriteFailure(str(exc)) from exc
    return path


def load_checkpoint(path, expect_hash: str | None = None):
    with np.load(Path(path), allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CorruptDataset(
                f"checkpoint version {meta.get('version')} unsupported"
            )
        if expect_hash is not None and meta["config_hash"] != expect_hash:
            raise CorruptDataset("checkpoint was written under a different config")
        token = PlaceholderToken(
            literal=meta["literal"], embedding=archive["v_star"]
        )
        adapters = {}
        for name in meta["targets"]:
            adapters[name] = LoraAdapter(
                target_layer_id=name,
                down=archive[f"adapter|{name}|down"],
                up=archive[f"adapter|{name}|up"],
                rank=int(meta["ranks"][name]),
                scale=float(meta["scales"][name]),
            )
        optimizer = Adam(lr=float(meta["lr"]))
        optimizer.t = int(meta["adam_t"])
        for key in archive.files:
            if key.startswith("adam_m|"):
                name = key.split("|", 1)[1]
                optimizer.m[name] = archive[key]
                optimizer.v[name] = archive[f"adam_v|{name}"]
    return token, adapters, optimizer, int(meta["step"])
