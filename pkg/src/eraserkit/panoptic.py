"""Panoptic segmentation data model and its JSON wire format.

A scene is a list of segments, each a countable "thing" instance or an
amorphous "stuff" region, with a binary pixel mask. Masks travel as
uncompressed row-major RLE (see :mod:`eraserkit.rle`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .rle import decode_rle, encode_rle

THING = "thing"
STUFF = "stuff"


@dataclass
class Segment:
    id: int
    category: str
    kind: str  # "thing" | "stuff"
    mask: np.ndarray  # uint8 {0,1}, full image dims

    def __post_init__(self):
        if self.kind not in (THING, STUFF):
            raise ValueError(f"segment kind must be thing|stuff, got {self.kind!r}")
        self.mask = (np.asarray(self.mask) > 0).astype(np.uint8)

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass
class PanopticScene:
    """An image plus its panoptic labeling.

    Segment masks should be pairwise disjoint and cover the image; gaps
    are tolerated (callers that care check ``coverage_gaps``).
    """

    image: np.ndarray  # uint8 RGB (h, w, 3)
    segments: list[Segment] = field(default_factory=list)

    def __post_init__(self):
        for seg in self.segments:
            if seg.mask.shape != self.image.shape[:2]:
                raise ShapeMismatch(
                    f"segment {seg.id} mask {seg.mask.shape} does not match "
                    f"image {self.image.shape[:2]}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[:2]

    def coverage(self) -> np.ndarray:
        """Number of segments claiming each pixel."""
        cov = np.zeros(self.shape, dtype=np.int32)
        for seg in self.segments:
            cov += seg.mask
        return cov

    def coverage_gaps(self) -> bool:
        return bool((self.coverage() == 0).any())

    def things(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == THING]

    def stuff(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == STUFF]

    def stuff_tags_by_area(self) -> list[str]:
        """Stuff category names, largest total area first."""
        areas: dict[str, int] = {}
        for seg in self.stuff():
            areas[seg.category] = areas.get(seg.category, 0) + seg.area
        return sorted(areas, key=lambda c: (-areas[c], c))


def segments_to_json(segments: list[Segment]) -> list[dict]:
    return [
        {
            "id": seg.id,
            "category": seg.category,
            "kind": seg.kind,
            "rle_mask": encode_rle(seg.mask),
        }
        for seg in segments
    ]


def segments_from_json(docs: list[dict]) -> list[Segment]:
    return [
        Segment(
            id=int(doc["id"]),
            category=str(doc["category"]),
            kind=str(doc["kind"]),
            mask=decode_rle(doc["rle_mask"]),
        )
        for doc in docs
    ]
