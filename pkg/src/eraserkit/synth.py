"""Synthetic panoptic scenes for tests and demos.

Scenes are flat-color compositions: horizontal stuff bands (sky over
grass, sand over water, ...) with elliptical thing blobs scattered on
them. Every segment mask is exact by construction, and the color palette
matches what PaletteSegmenter recovers, so the synthetic ground truth
round-trips through the stub segmenter.
"""

from __future__ import annotations

import numpy as np

from .panoptic import STUFF, THING, PanopticScene, Segment

# quantization-stable colors (multiples of 16)
PALETTE: dict[tuple, tuple[str, str]] = {
    (128, 208, 240): ("sky", STUFF),
    (80, 128, 64): ("grass", STUFF),
    (128, 128, 128): ("gravel", STUFF),
    (192, 176, 128): ("sand", STUFF),
    (64, 96, 128): ("water", STUFF),
    (240, 240, 224): ("sheep", THING),
    (192, 80, 64): ("person", THING),
    (128, 80, 48): ("dog", THING),
    (176, 16, 16): ("car", THING),
    (96, 96, 80): ("rock", THING),
}

_STUFF_COLORS = {cat: c for c, (cat, kind) in PALETTE.items() if kind == STUFF}
_THING_COLORS = {cat: c for c, (cat, kind) in PALETTE.items() if kind == THING}


def _ellipse_mask(h, w, cy, cx, ry, rx):
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def make_scene(
    seed: int = 0,
    size: tuple[int, int] = (64, 64),
    bands: tuple[str, str] = ("sky", "grass"),
    things: tuple[str, ...] = ("sheep",),
) -> PanopticScene:
    """One synthetic scene: two stuff bands plus elliptical things.

    Things are placed in the lower band with areas a few percent of the
    image, so they are eligible erase targets. (seed, size, bands,
    things) fully determine the pixels.
    """
    rng = np.random.default_rng(seed)
    h, w = size
    image = np.zeros((h, w, 3), dtype=np.uint8)
    split = h // 3 + int(rng.integers(0, max(1, h // 6)))
    top, bottom = bands
    image[:split] = _STUFF_COLORS[top]
    image[split:] = _STUFF_COLORS[bottom]

    thing_masks: list[tuple[str, np.ndarray]] = []
    occupied = np.zeros((h, w), dtype=bool)
    for category in things:
        # a blob of 2-8% image area, kept inside the lower band
        for _ in range(50):
            ry = int(rng.integers(h // 12, h // 6)) or 1
            rx = int(rng.integers(w // 12, w // 6)) or 1
            cy = int(rng.integers(split + ry, max(split + ry + 1, h - ry)))
            cx = int(rng.integers(rx, max(rx + 1, w - rx)))
            mask = _ellipse_mask(h, w, cy, cx, ry, rx)
            if not mask.any() or (mask & occupied).any():
                continue
            frac = mask.mean()
            if 0.005 <= frac <= 0.3:
                thing_masks.append((category, mask))
                occupied |= mask
                image[mask] = _THING_COLORS[category]
                break

    segments: list[Segment] = []
    next_id = 1
    band_masks = {
        top: np.zeros((h, w), dtype=bool),
        bottom: np.zeros((h, w), dtype=bool),
    }
    band_masks[top][:split] = True
    band_masks[bottom][split:] = True
    if top == bottom:
        band_masks = {top: np.ones((h, w), dtype=bool)}
    for category, band in band_masks.items():
        segments.append(
            Segment(
                id=next_id,
                category=category,
                kind=STUFF,
                mask=band & ~occupied,
            )
        )
        next_id += 1
    for category, mask in thing_masks:
        segments.append(Segment(id=next_id, category=category, kind=THING, mask=mask))
        next_id += 1
    return PanopticScene(image=image, segments=segments)


def make_corpus(n: int, seed: int = 0, size: tuple[int, int] = (64, 64)) -> list[PanopticScene]:
    """A small varied corpus of scenes for dataset-builder tests."""
    rng = np.random.default_rng(seed)
    band_choices = [("sky", "grass"), ("sky", "sand"), ("water", "sand"), ("sky", "gravel")]
    thing_choices = [("sheep",), ("person",), ("dog", "sheep"), ("car",), ("rock", "person")]
    scenes = []
    for i in range(n):
        bands = band_choices[int(rng.integers(len(band_choices)))]
        things = thing_choices[int(rng.integers(len(thing_choices)))]
        scenes.append(make_scene(seed=seed * 1000 + i, size=size, bands=bands, things=things))
    return scenes
