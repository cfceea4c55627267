"""Desk-scale stand-ins for the external clients.

The real system talks to a GAN inpainter, a VAE, a panoptic segmenter, a
VLM captioner and perceptual feature extractors over process boundaries.
These stubs honor the same contracts with deterministic, dependency-free
behavior so the whole pipeline runs on a laptop.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import EncodeFailure, SegmenterUnavailable, VlmUnavailable
from .panoptic import STUFF, THING, PanopticScene, Segment

# fixed 3->4 channel mixing for the toy latent space
_LATENT_PROJ = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1 / 3, 1 / 3, 1 / 3],
    ]
)
_LATENT_UNPROJ = np.linalg.pinv(_LATENT_PROJ)


class ToyVae:
    """Block-mean latent codec: 8x spatial reduction, 4 channels.

    encode() averages 8x8 pixel blocks of the [-1, 1]-normalized image and
    mixes RGB into 4 latent channels; decode() inverts the mixing and
    upsamples by pixel duplication. Spatial dims must be multiples of 8.
    """

    factor = 8

    def encode(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        h, w = img.shape[:2]
        if h % self.factor or w % self.factor:
            raise EncodeFailure(f"dims {h}x{w} not multiples of {self.factor}")
        norm = img / 127.5 - 1.0
        f = self.factor
        blocks = norm.reshape(h // f, f, w // f, f, 3).mean(axis=(1, 3))
        return blocks @ _LATENT_PROJ.T

    def decode(self, latent: np.ndarray) -> np.ndarray:
        rgb = np.asarray(latent, dtype=np.float64) @ _LATENT_UNPROJ.T
        rgb = np.repeat(np.repeat(rgb, self.factor, axis=0), self.factor, axis=1)
        return np.clip((rgb + 1.0) * 127.5, 0, 255).astype(np.uint8)


class IdentityInpainter:
    """Returns its input untouched."""

    def inpaint(self, image, mask):
        return np.asarray(image).copy()


class MeanFillInpainter:
    """Fills the masked region with the mean color of the unmasked pixels."""

    def inpaint(self, image, mask):
        img = np.asarray(image, dtype=np.float64).copy()
        hole = np.asarray(mask) > 0
        keep = ~hole
        if keep.any():
            fill = img[keep].mean(axis=0)
        else:
            fill = np.full(img.shape[-1], 127.0)
        img[hole] = fill
        return img.astype(np.uint8) if np.asarray(image).dtype == np.uint8 else img


class PaletteSegmenter:
    """Color-keyed panoptic segmentation for synthetic scenes.

    A palette maps quantized RGB colors to (category, kind). Thing
    categories split into connected-component instances; stuff merges per
    category. Colors outside the palette become stuff regions named by
    their quantized color, so any image segments deterministically.
    """

    def __init__(self, palette: dict[tuple, tuple[str, str]] | None = None, quantum: int = 16):
        self.palette = dict(palette or {})
        self.quantum = quantum

    def _key(self, color) -> tuple:
        q = self.quantum
        return tuple(int(c) // q * q for c in color)

    def panoptic(self, image: np.ndarray) -> PanopticScene:
        img = np.asarray(image)
        if img.ndim != 3 or img.shape[2] != 3:
            raise SegmenterUnavailable(f"expected RGB image, got shape {img.shape}")
        quant = (img // self.quantum * self.quantum).astype(np.int64)
        flat = quant.reshape(-1, 3)
        colors, inverse = np.unique(flat, axis=0, return_inverse=True)
        label_img = inverse.reshape(img.shape[:2])

        lookup = {self._key(c): (cat, kind) for c, (cat, kind) in self.palette.items()}
        segments: list[Segment] = []
        next_id = 1
        for idx, color in enumerate(colors):
            region = label_img == idx
            category, kind = lookup.get(
                tuple(int(v) for v in color),
                (f"region_{int(color[0])}_{int(color[1])}_{int(color[2])}", STUFF),
            )
            if kind == THING:
                components, n = ndimage.label(region)
                for comp in range(1, n + 1):
                    segments.append(
                        Segment(
                            id=next_id,
                            category=category,
                            kind=THING,
                            mask=(components == comp),
                        )
                    )
                    next_id += 1
            else:
                segments.append(
                    Segment(id=next_id, category=category, kind=STUFF, mask=region)
                )
                next_id += 1
        return PanopticScene(image=img.astype(np.uint8), segments=segments)


class EchoVlm:
    """Caption client that returns the prompt it was given."""

    def describe(self, image, prompt: str) -> str:
        return prompt


class TemplateVlm:
    """Deterministic caption client for dataset builds."""

    def describe(self, image, prompt: str) -> str:
        mean = np.asarray(image, dtype=np.float64).mean()
        tone = "bright" if mean > 127 else "muted"
        return f"{prompt.rstrip('.')}: the scene is {tone} and evenly textured."


class FailingVlm:
    """Always unavailable; exercises the flagged-sample path."""

    def describe(self, image, prompt: str) -> str:
        raise VlmUnavailable("caption service down")


class StubFeatureExtractor:
    """Deterministic features: 4x4 grid of per-channel means (48-dim)."""

    grid = 4

    def embed(self, images) -> np.ndarray:
        feats = []
        for img in images:
            arr = np.asarray(img, dtype=np.float64)
            h, w = arr.shape[:2]
            g = self.grid
            ys = np.linspace(0, h, g + 1).astype(int)
            xs = np.linspace(0, w, g + 1).astype(int)
            cells = [
                arr[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].mean(axis=(0, 1))
                for i in range(g)
                for j in range(g)
            ]
            feats.append(np.concatenate(cells))
        return np.stack(feats)

    def perceptual_distance(self, a, b) -> float:
        pa = np.asarray(a, dtype=np.float64)
        pb = np.asarray(b, dtype=np.float64)
        return float(np.abs(pa - pb).mean() / 255.0)
