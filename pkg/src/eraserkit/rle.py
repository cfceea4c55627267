"""Uncompressed run-length encoding for binary masks.

Wire format used by the panoptic JSON boundary and the job API:

    {"size": [h, w], "counts": [n0, n1, n2, ...]}

``counts`` are run lengths over the row-major (C-order) flattening of the
mask, alternating value 0 then 1, always starting with the count of
leading zeros (which may be 0). The counts sum to h*w.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


def encode_rle(mask: np.ndarray) -> dict:
    """Encode a binary h*w mask into the uncompressed RLE document."""
    if mask.ndim != 2:
        raise ShapeMismatch(f"mask must be 2-D, got shape {mask.shape}")
    flat = np.ascontiguousarray(mask).reshape(-1).astype(np.uint8)
    if flat.size == 0:
        return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": []}
    # boundaries between runs of equal values
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    counts = (ends - starts).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_rle(doc: dict) -> np.ndarray:
    """Decode an RLE document back into a uint8 h*w mask of {0, 1}."""
    h, w = (int(v) for v in doc["size"])
    counts = doc["counts"]
    total = sum(counts)
    if total != h * w:
        raise ShapeMismatch(f"RLE counts sum to {total}, expected {h * w}")
    values = np.zeros(len(counts), dtype=np.uint8)
    values[1::2] = 1
    flat = np.repeat(values, counts)
    return flat.reshape(h, w)
