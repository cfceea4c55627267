"""Diffusion-side primitives: noise schedules, closed-form forward noising,
conditioning assembly, content initialization, and the sampling loop.

The forward process over T steps with variance schedule beta_1..beta_T is

    q(z_t | z_{t-1}) = N(z_t; sqrt(1 - beta_t) z_{t-1}, beta_t I)

whose closed form, with alpha_t = 1 - beta_t and abar_t = prod alpha_i, is

    z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps,   eps ~ N(0, I).

Sampling uses a deterministic eps-prediction update (DDIM, eta = 0), so a
fixed seed and config give bit-identical outputs; the attention-refocus
hook is threaded through the denoiser on the steps its window admits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import (
    DenoiserFailure,
    EncodeFailure,
    InpainterUnavailable,
    InvalidSchedule,
    InvalidStrength,
    ShapeMismatch,
)

# conventional linear range for T=1000; scaled proportionally nowhere,
# callers pick their own range for small T
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02

LATENT_CHANNELS = 4
LATENT_DOWNSCALE = 8  # 512 px -> 64 latent


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule tables: beta_t, alpha_t = 1-beta_t, abar_t = prod alpha_i.

    Arrays are indexed 0..T-1 for steps 1..T. All entries are float64.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        if self.T < 1 or len(self.betas) != self.T:
            raise InvalidSchedule(f"bad table length for T={self.T}")
        if np.any(self.betas <= 0.0) or np.any(self.betas >= 1.0):
            raise InvalidSchedule("betas must lie strictly inside (0, 1)")
        if np.any(self.alpha_bars <= 0.0):
            raise InvalidSchedule("alpha_bars must be strictly positive")
        if self.T > 1 and not np.all(np.diff(self.alpha_bars) < 0.0):
            raise InvalidSchedule("alpha_bars must be strictly decreasing")
        product = np.cumprod(self.alphas)
        if np.max(np.abs(self.alpha_bars - product) / product) > 1e-12:
            raise InvalidSchedule("alpha_bars must equal the running alpha product")

    def alpha_bar(self, t: int) -> float:
        """abar_t for a 1-indexed step t; abar_0 is defined as 1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


@dataclass
class LatentState:
    """A 4-channel latent z of shape (h, w, 4) at diffusion step t."""

    z: np.ndarray
    t: int

    def __post_init__(self):
        if self.z.ndim != 3 or self.z.shape[2] != LATENT_CHANNELS:
            raise ShapeMismatch(f"latent must be (h, w, 4), got {self.z.shape}")
        if self.z.shape[0] < 1 or self.z.shape[1] < 1:
            raise ShapeMismatch("latent spatial dims must be positive")
        if self.t < 0:
            raise ValueError(f"step index must be >= 0, got {self.t}")

    @property
    def h(self) -> int:
        return self.z.shape[0]

    @property
    def w(self) -> int:
        return self.z.shape[1]


@dataclass
class ConditioningBundle:
    """Inpainting conditioning: masked latent, binary mask, text embedding."""

    z_masked: np.ndarray
    mask: np.ndarray
    text_embedding: np.ndarray

    def __post_init__(self):
        if self.z_masked.ndim != 3 or self.z_masked.shape[2] != LATENT_CHANNELS:
            raise ShapeMismatch(f"z_masked must be (h, w, 4), got {self.z_masked.shape}")
        m = self.mask
        if m.ndim == 3 and m.shape[2] == 1:
            m = m[:, :, 0]
        if m.shape != self.z_masked.shape[:2]:
            raise ShapeMismatch(
                f"mask {self.mask.shape} does not match latent {self.z_masked.shape}"
            )
        vals = np.unique(m)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("mask values must be in {0, 1}")
        self.mask = m.astype(np.float64)


class CoarseInpainterClient(Protocol):
    """Pixel-space inpainter served out of process. mask value 1 = fill here."""

    def inpaint(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray: ...


class VaeClient(Protocol):
    """Latent codec; encode divides spatial dims by 8, decode restores them."""

    def encode(self, image: np.ndarray) -> np.ndarray: ...

    def decode(self, latent: np.ndarray) -> np.ndarray: ...


def build_schedule(
    T: int,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
    kind: str = "linear",
) -> NoiseSchedule:
    """Build the beta/alpha/abar tables for a T-step schedule.

    kind="linear" spaces beta_t linearly in [beta_start, beta_end];
    kind="scaled_linear" spaces sqrt(beta_t) linearly (the SD convention).
    abar is the exact running product of the alphas.
    """
    if T < 1:
        raise InvalidSchedule(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidSchedule(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    elif kind == "scaled_linear":
        betas = np.linspace(beta_start**0.5, beta_end**0.5, T, dtype=np.float64) ** 2
    else:
        raise InvalidSchedule(f"unknown schedule kind {kind!r}")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def forward_noise(
    z0: LatentState, t_prime: int, schedule: NoiseSchedule, eps: np.ndarray
) -> LatentState:
    """Noise a clean latent to step t' in closed form.

        z_{t'} = sqrt(abar_{t'}) z_0 + sqrt(1 - abar_{t'}) eps

    eps is injected by the caller so runs are reproducible.
    """
    if not 1 <= t_prime <= schedule.T:
        raise InvalidSchedule(f"t_prime must be in [1, {schedule.T}], got {t_prime}")
    if eps.shape != z0.z.shape:
        raise ShapeMismatch(f"eps shape {eps.shape} != latent shape {z0.z.shape}")
    abar = schedule.alpha_bar(t_prime)
    z = np.sqrt(abar) * z0.z + np.sqrt(1.0 - abar) * eps
    return LatentState(z=z, t=t_prime)


def steps_from_strength(T: int, s: float) -> int:
    """Number of sampling steps actually run: T' = floor(T * s), clamped >= 1."""
    if T < 1:
        raise InvalidSchedule(f"T must be >= 1, got {T}")
    if not 0.0 < s <= 1.0:
        raise InvalidStrength(f"strength must be in (0, 1], got {s}")
    return max(1, int(np.floor(T * s)))


def content_initialize(
    image: np.ndarray,
    user_mask: np.ndarray,
    inpainter: CoarseInpainterClient,
    vae: VaeClient,
) -> LatentState:
    """Pre-fill the erase region with a coarse inpaint, then encode.

    The pre-processed image is composited so that pixels outside the mask
    equal the input exactly, whatever the inpainter returned. An all-zero
    mask bypasses the inpainter entirely.
    """
    if user_mask.shape[:2] != image.shape[:2]:
        raise ShapeMismatch(
            f"mask {user_mask.shape} does not match image {image.shape}"
        )
    mask = np.asarray(user_mask)
    if mask.ndim == 3:
        mask = mask[:, :, 0]
    binary = (mask > 0).astype(np.float64)

    if not binary.any():
        pre = np.asarray(image, dtype=np.float64)
    else:
        try:
            filled = inpainter.inpaint(image, binary)
        except Exception as exc:  # client is a process boundary
            raise InpainterUnavailable(str(exc)) from exc
        if filled.shape[:2] != image.shape[:2]:
            raise InpainterUnavailable(
                f"inpainter changed dimensions: {filled.shape} vs {image.shape}"
            )
        m3 = binary[:, :, None]
        pre = np.asarray(filled, dtype=np.float64) * m3 + np.asarray(
            image, dtype=np.float64
        ) * (1.0 - m3)

    try:
        z = vae.encode(pre)
    except Exception as exc:
        raise EncodeFailure(str(exc)) from exc
    return LatentState(z=np.asarray(z, dtype=np.float64), t=0)


def assemble_unet_input(z: LatentState, cond: ConditioningBundle) -> np.ndarray:
    """Concatenate [z_t (4) | z_masked (4) | mask (1)] into the 9-channel input."""
    if cond.z_masked.shape != z.z.shape:
        raise ShapeMismatch(
            f"z_masked {cond.z_masked.shape} does not match latent {z.z.shape}"
        )
    if cond.mask.shape != z.z.shape[:2]:
        raise ShapeMismatch(
            f"mask {cond.mask.shape} does not match latent {z.z.shape}"
        )
    return np.concatenate(
        [z.z, cond.z_masked, cond.mask[:, :, None]], axis=2
    ).astype(np.float64)


def predict_z0(z_t: np.ndarray, t: int, schedule: NoiseSchedule, eps_hat: np.ndarray):
    """Invert the closed form: z0_hat = (z_t - sqrt(1-abar_t) eps) / sqrt(abar_t)."""
    abar = schedule.alpha_bar(t)
    return (z_t - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)


def denoise_loop(
    z_init: LatentState,
    cond: ConditioningBundle,
    schedule: NoiseSchedule,
    denoiser: Callable,
    refocus_hook=None,
) -> LatentState:
    """Run the deterministic eps-prediction sampler from z_init down to t=0.

    Each step t = T'..1 applies

        z0_hat  = (z_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t)
        z_{t-1} = sqrt(abar_{t-1}) z0_hat + sqrt(1-abar_{t-1}) eps_hat

    with abar_0 = 1. ``denoiser(x9, t, text_embedding, attn_hook=...)``
    must return the predicted eps with latent shape. When a refocus hook
    is given, it is handed to the denoiser (which calls it at every
    self-attention layer) on exactly the steps whose normalized time
    t / T' its window admits; the first executed step maps to 1.0.
    """
    t_start = z_init.t
    if t_start == 0:
        return z_init
    if t_start > schedule.T:
        raise InvalidSchedule(f"start step {t_start} exceeds T={schedule.T}")

    z = z_init.z
    for t in range(t_start, 0, -1):
        hook = None
        if refocus_hook is not None and refocus_hook.active(t / t_start):
            hook = refocus_hook
        x9 = assemble_unet_input(LatentState(z=z, t=t), cond)
        try:
            eps_hat = denoiser(x9, t, cond.text_embedding, attn_hook=hook)
        except Exception as exc:
            raise DenoiserFailure(t, exc) from exc
        if eps_hat.shape != z.shape:
            raise DenoiserFailure(
                t, ShapeMismatch(f"denoiser returned {eps_hat.shape}, want {z.shape}")
            )
        z0_hat = predict_z0(z, t, schedule, eps_hat)
        abar_prev = schedule.alpha_bar(t - 1)
        z = np.sqrt(abar_prev) * z0_hat + np.sqrt(1.0 - abar_prev) * eps_hat
    return LatentState(z=z, t=0)
