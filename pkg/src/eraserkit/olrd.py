"""Object-level removal dataset construction.

Each record starts from a panoptic-labeled image: pick an eligible
object, shift a copy of it onto background, and paste it hard-edged into
the original. The pair (blended image, shifted mask) with the untouched
original as target teaches a model that erasing means restoring
background, not inventing objects:

    blended = shifted_object * shifted_mask + original * (1 - shifted_mask)

with mask value 1 on the shifted footprint. No scaling, rotation, or
color jitter is applied to the shifted object.

On-disk layout, one directory per sample plus a manifest:

    OLRD/<sample_id>/original.png, blended.png, mask.png (0/255), meta.json
    OLRD/manifest.json  {format_version, samples: [{id, shard, hashes}]}
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    CorruptDataset,
    IoFailure,
    NoErasableObject,
    PlacementNotFound,
    ShapeMismatch,
    VlmUnavailable,
)
from .panoptic import PanopticScene, Segment
from .prompt_tuning import TrainSample, build_simple_prompt, rank_background_tags

FORMAT_VERSION = 1

# eligible object area as a fraction of the image
AREA_MIN = 0.01
AREA_MAX = 0.30

# placement acceptance: footprint share on stuff pixels, and the cap on
# overlap with the object's original footprint
PURITY_THRESHOLD = 0.95
SELF_OVERLAP_IOU_MAX = 0.25
DEFAULT_MAX_TRIES = 100


@dataclass
class ErasureSample:
    """One training record; see the module docstring for the invariants."""

    original: np.ndarray  # uint8 RGB
    blended: np.ndarray  # uint8 RGB
    shifted_mask: np.ndarray  # uint8 {0, 1}, 1 = region to erase
    background_tags: list[str]
    caption: str
    provenance: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.original.shape != self.blended.shape:
            raise ShapeMismatch("original and blended dims disagree")
        if self.shifted_mask.shape != self.original.shape[:2]:
            raise ShapeMismatch("mask dims disagree with image")


def select_object(scene: PanopticScene, rng) -> tuple[np.ndarray, np.ndarray, Segment]:
    """Uniformly pick an eligible thing-segment.

    Returns (object pixels on a zeroed canvas, binary mask, segment).
    Eligible means a thing whose area is 1%..30% of the image.
    """
    total = scene.image.shape[0] * scene.image.shape[1]
    eligible = [
        seg
        for seg in scene.things()
        if AREA_MIN <= seg.area / total <= AREA_MAX
    ]
    if not eligible:
        raise NoErasableObject(
            f"no thing-segment with area in [{AREA_MIN}, {AREA_MAX}] of the image"
        )
    seg = eligible[int(rng.integers(len(eligible)))]
    mask = seg.mask.astype(np.uint8)
    pixels = scene.image * mask[:, :, None]
    return pixels, mask, seg


def shift_array(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer shift with zero fill; positive dy moves content down."""
    out = np.zeros_like(arr)
    h, w = arr.shape[:2]
    src_y = slice(max(0, -dy), min(h, h - dy))
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_y = slice(max(0, dy), min(h, h + dy))
    dst_x = slice(max(0, dx), min(w, w + dx))
    out[dst_y, dst_x] = arr[src_y, src_x]
    return out


def _placement_ok(shifted: np.ndarray, original_mask: np.ndarray, stuff: np.ndarray) -> bool:
    area = shifted.sum()
    if area != original_mask.sum():  # clipped at the border
        return False
    on_stuff = (shifted & stuff).sum()
    if on_stuff < PURITY_THRESHOLD * area:
        return False
    inter = (shifted & original_mask.astype(bool)).sum()
    union = (shifted | original_mask.astype(bool)).sum()
    if union and inter / union >= SELF_OVERLAP_IOU_MAX:
        return False
    return True


def find_placement(
    scene: PanopticScene,
    mask: np.ndarray,
    rng,
    max_tries: int = DEFAULT_MAX_TRIES,
) -> tuple[int, int]:
    """Rejection-sample an offset that drops the footprint onto background.

    Accepts an integer (dy, dx) when the shifted footprint stays fully
    inside the image, lands >= 95% on stuff pixels of the original scene,
    and overlaps the original footprint with IoU < 0.25.
    """
    if not mask.any():
        raise NoErasableObject("object mask is empty")
    stuff = np.zeros(scene.shape, dtype=bool)
    for seg in scene.stuff():
        stuff |= seg.mask.astype(bool)

    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r0, r1 = rows[0], rows[-1]
    c0, c1 = cols[0], cols[-1]
    h, w = scene.shape
    dy_lo, dy_hi = -r0, h - 1 - r1
    dx_lo, dx_hi = -c0, w - 1 - c1
    if dy_lo > dy_hi or dx_lo > dx_hi:
        raise PlacementNotFound("object spans the full image")

    footprint = mask.astype(bool)
    for _ in range(max_tries):
        dy = int(rng.integers(dy_lo, dy_hi + 1))
        dx = int(rng.integers(dx_lo, dx_hi + 1))
        shifted = shift_array(footprint, dy, dx)
        if _placement_ok(shifted, mask, stuff):
            return dy, dx
    raise PlacementNotFound(f"no valid offset in {max_tries} tries")


def blend(original: np.ndarray, shifted_object: np.ndarray, shifted_mask: np.ndarray) -> np.ndarray:
    """Hard composite: object pixels where the mask is 1, original elsewhere."""
    if shifted_object.shape != original.shape:
        raise ShapeMismatch("shifted object dims disagree with image")
    if shifted_mask.shape != original.shape[:2]:
        raise ShapeMismatch("mask dims disagree with image")
    m3 = (shifted_mask > 0)[:, :, None]
    return np.where(m3, shifted_object, original)


def caption_prompt_for(tags: list[str]) -> str:
    if len(tags) >= 2:
        return f"Describe the {tags[0]} and the {tags[1]} in the image"
    return f"Describe the {tags[0]} in the image"


def background_caption(image: np.ndarray, background_tags: list[str], vlm) -> str:
    """Ask the caption client to describe the top background regions."""
    if not background_tags:
        raise VlmUnavailable("no background tags to describe")
    prompt = caption_prompt_for(background_tags[:2])
    caption = vlm.describe(image, prompt)
    if not caption:
        raise VlmUnavailable("caption client returned an empty caption")
    return caption


def build_sample(scene: PanopticScene, seed: int, vlm, source_id: str = "scene") -> ErasureSample:
    """Compose select -> place -> blend -> caption into one record.

    (scene, seed) fully determine the output; a failing caption client
    yields an empty caption plus a "caption_missing" flag rather than a
    failed sample.
    """
    rng = np.random.default_rng(seed)
    pixels, mask, seg = select_object(scene, rng)
    dy, dx = find_placement(scene, mask, rng)
    shifted_mask = shift_array(mask, dy, dx)
    shifted_object = shift_array(pixels, dy, dx)
    blended = blend(scene.image, shifted_object, shifted_mask)

    area_tags = scene.stuff_tags_by_area()[:2]
    adjacency_tags = rank_background_tags(
        [s for s in scene.stuff() if s.category in area_tags], shifted_mask
    )
    tags = adjacency_tags or area_tags
    flags: list[str] = []
    try:
        caption = background_caption(scene.image, area_tags, vlm)
    except VlmUnavailable:
        caption = ""
        flags.append("caption_missing")

    sample = ErasureSample(
        original=scene.image.copy(),
        blended=blended.astype(np.uint8),
        shifted_mask=shifted_mask.astype(np.uint8),
        background_tags=list(tags),
        caption=caption,
        provenance={
            "source": source_id,
            "object_id": int(seg.id),
            "object_category": seg.category,
            "offset": [int(dy), int(dx)],
            "seed": int(seed),
        },
        flags=flags,
    )
    problems = validate_sample(sample, scene)
    if problems:
        raise ShapeMismatch(f"constructed sample violates invariants: {problems}")
    return sample


def validate_sample(sample: ErasureSample, scene: PanopticScene | None = None) -> list[str]:
    """Independent re-derivation of every sample invariant.

    Returns a list of violation descriptions; empty means valid. When the
    source scene is given, footprint purity and the blend's object pixels
    are re-checked against it from the recorded provenance.
    """
    problems = []
    m = sample.shifted_mask
    if not np.all(np.isin(np.unique(m), (0, 1))):
        problems.append("mask not binary")
    keep = m == 0
    if not np.array_equal(sample.blended[keep], sample.original[keep]):
        problems.append("blended differs from original outside the mask")
    if scene is not None:
        stuff = np.zeros(scene.shape, dtype=bool)
        for seg in scene.stuff():
            stuff |= seg.mask.astype(bool)
        area = int(m.sum())
        if area:
            purity = (m.astype(bool) & stuff).sum() / area
            if purity < PURITY_THRESHOLD:
                problems.append(f"footprint purity {purity:.3f} below threshold")
        dy, dx = sample.provenance.get("offset", (0, 0))
        obj = scene.image * (shift_array(m, -dy, -dx) > 0)[:, :, None]
        shifted_obj = shift_array(obj, dy, dx)
        inside = m > 0
        if not np.array_equal(sample.blended[inside], shifted_obj[inside]):
            problems.append("blended object pixels do not match the shifted source")
    return problems


# ---------------------------------------------------------------------------
# on-disk format


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_dataset(samples, out_dir, shard_size: int = 64) -> dict:
    """Write samples under out_dir and return the manifest (also on disk)."""
    root = Path(out_dir)
    entries = []
    try:
        root.mkdir(parents=True, exist_ok=True)
        for i, sample in enumerate(samples):
            sample_id = f"{i:06d}"
            sdir = root / sample_id
            sdir.mkdir(exist_ok=True)
            files = {
                "original.png": _png_bytes(sample.original),
                "blended.png": _png_bytes(sample.blended),
                "mask.png": _png_bytes((sample.shifted_mask * 255).astype(np.uint8)),
            }
            meta = {
                "tags": sample.background_tags,
                "caption": sample.caption,
                "offset": sample.provenance.get("offset"),
                "seed": sample.provenance.get("seed"),
                "source": sample.provenance.get("source"),
                "object_id": sample.provenance.get("object_id"),
                "object_category": sample.provenance.get("object_category"),
                "flags": sample.flags,
                "hashes": {name: _sha256(data) for name, data in files.items()},
            }
            meta_bytes = json.dumps(meta, indent=1, sort_keys=True).encode()
            files["meta.json"] = meta_bytes
            for name, data in files.items():
                (sdir / name).write_bytes(data)
            entries.append(
                {
                    "id": sample_id,
                    "shard": i // shard_size,
                    "hashes": {name: _sha256(data) for name, data in files.items()},
                }
            )
        manifest = {"format_version": FORMAT_VERSION, "samples": entries}
        (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return manifest


def read_sample(sample_dir) -> ErasureSample:
    sdir = Path(sample_dir)
    try:
        original = np.array(Image.open(sdir / "original.png"))
        blended = np.array(Image.open(sdir / "blended.png"))
        mask = (np.array(Image.open(sdir / "mask.png")) > 127).astype(np.uint8)
        meta = json.loads((sdir / "meta.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptDataset(f"unreadable sample at {sdir}: {exc}") from exc
    return ErasureSample(
        original=original,
        blended=blended,
        shifted_mask=mask,
        background_tags=list(meta.get("tags") or []),
        caption=meta.get("caption", ""),
        provenance={
            "source": meta.get("source"),
            "object_id": meta.get("object_id"),
            "object_category": meta.get("object_category"),
            "offset": meta.get("offset"),
            "seed": meta.get("seed"),
        },
        flags=list(meta.get("flags") or []),
    )


def read_dataset(root) -> list[ErasureSample]:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorruptDataset(f"no manifest at {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CorruptDataset(f"unsupported format_version {manifest.get('format_version')}")
    return [read_sample(root / entry["id"]) for entry in manifest["samples"]]


def mask_to_latent(mask: np.ndarray, factor: int = 8) -> np.ndarray:
    """Pool a pixel mask to the latent grid; any masked pixel marks the cell."""
    h, w = mask.shape
    if h % factor or w % factor:
        raise ShapeMismatch(f"mask dims {h}x{w} not multiples of {factor}")
    blocks = mask.reshape(h // factor, factor, w // factor, factor)
    return (blocks.max(axis=(1, 3)) > 0).astype(np.float64)


def load_train_samples(root, vae, limit: int | None = None) -> list[TrainSample]:
    """Materialize dataset records into latent-space training samples.

    The denoising target is the original image's latent; the masked-image
    latent sees the original with the erase region blanked (identical to
    blanking the blended image there). Samples with a missing caption
    fall back to the constructed prompt on the caption branch.
    """
    records = read_dataset(root)
    if limit is not None:
        records = records[:limit]
    if not records:
        raise CorruptDataset(f"dataset at {root} has no samples")
    out = []
    for rec in records:
        mask3 = (rec.shifted_mask > 0)[:, :, None]
        masked_img = np.where(mask3, 0, rec.original)
        z0 = vae.encode(rec.original)
        z_masked = vae.encode(masked_img)
        latent_mask = mask_to_latent(rec.shifted_mask, vae.factor)
        simple = build_simple_prompt(rec.background_tags)
        out.append(
            TrainSample(
                z0=z0,
                z_masked=z_masked,
                mask=latent_mask,
                simple_prompt=simple,
                caption_prompt=rec.caption or simple,
            )
        )
    return out
