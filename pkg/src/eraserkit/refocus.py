"""Semantics-aware modulation of self-attention logits.

Every latent pixel gets a label l in {mask, positive, negative}: the
erase region itself, background context it should borrow from, and
object-like context it should ignore. From the label vector two binary
N*N pair masks are built (N = h*w tokens, row-major):

    Mask_pos[i,j] = 1  iff (l[i]=m and l[j]=p) or (l[i]=p and l[j] in {m,p})
    Mask_neg[i,j] = 1  iff (l[i]=m and l[j] in {m,n}) or (l[i]=n and l[j]=m)

Per query row, S_max/S_min replicate the row max/min of the raw
similarity scores Q K^T along the key axis, and

    W_pos = (1 - lambda_pos) S_min + lambda_pos S_max
    W_neg = lambda_neg S_max
    M     = W_pos * Mask_pos - W_neg * Mask_neg

is added to the logits before the 1/sqrt(d) scaling:

    A' = softmax((Q K^T + M) / sqrt(d)).

Modulation runs only on the early (noisiest) part of the sampling loop,
normalized time in [window_lo, window_hi] with 1.0 the first step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidTarget, ShapeMismatch
from .errors import CoverageGapWarning
from .panoptic import Segment, THING

# label codes; the order encodes downsampling priority (lower wins)
MASK = 0
NEGATIVE = 1
POSITIVE = 2

_LABEL_NAMES = {MASK: "mask", NEGATIVE: "negative", POSITIVE: "positive"}


@dataclass(frozen=True)
class RefocusConfig:
    """Modulation strengths and the active step window.

    lambda_pos in [0, 1] interpolates between the row minimum and row
    maximum of the raw scores for the positive boost; lambda_neg >= 0
    scales the row maximum used as the penalty. Defaults follow the
    values the method ships with (0.8 and 1.0) and the step window
    [0.7, 1.0], boundaries inclusive.
    """

    lambda_pos: float = 0.8
    lambda_neg: float = 1.0
    window_lo: float = 0.7
    window_hi: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lambda_pos <= 1.0:
            raise ValueError(f"lambda_pos must be in [0, 1], got {self.lambda_pos}")
        if self.lambda_neg < 0.0:
            raise ValueError(f"lambda_neg must be >= 0, got {self.lambda_neg}")
        if not 0.0 <= self.window_lo < self.window_hi <= 1.0:
            raise ValueError(
                f"need 0 <= window_lo < window_hi <= 1, got "
                f"({self.window_lo}, {self.window_hi})"
            )


@dataclass
class LabelMap:
    """Per-pixel labels over one attention layer's token grid.

    Flattening is row-major and fixed: token i = labels[i // w, i % w].
    """

    labels: np.ndarray  # int8 (h, w) with values in {MASK, NEGATIVE, POSITIVE}

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ShapeMismatch(f"label map must be 2-D, got {lab.shape}")
        if not np.all(np.isin(lab, (MASK, NEGATIVE, POSITIVE))):
            raise ValueError("labels must be MASK, NEGATIVE or POSITIVE")
        self.labels = lab.astype(np.int8)

    @property
    def h(self) -> int:
        return self.labels.shape[0]

    @property
    def w(self) -> int:
        return self.labels.shape[1]

    def flat(self) -> np.ndarray:
        return self.labels.reshape(-1)


@dataclass
class AttentionModulation:
    """The four factor matrices and the additive logit matrix M for one layer."""

    mask_pos: np.ndarray
    mask_neg: np.ndarray
    w_pos: np.ndarray
    w_neg: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        if np.any(self.mask_pos * self.mask_neg != 0):
            raise ValueError("mask_pos and mask_neg must be disjoint")


def build_label_map(
    segments: list[Segment],
    erase_mask: np.ndarray,
    negative_categories: set[str] | None = None,
) -> LabelMap:
    """Label each pixel from the panoptic segments and the erase mask.

    Precedence MASK > NEGATIVE > POSITIVE: pixels under the erase mask are
    MASK; pixels of segments whose category is in ``negative_categories``
    are NEGATIVE; everything else is POSITIVE. When no category set is
    given, the default is the categories of the segments the erase mask
    touches plus every "thing" segment (object-like context is suspect
    even when its category differs). Pixels no segment claims fall back
    to POSITIVE with a CoverageGapWarning.
    """
    erase = (np.asarray(erase_mask) > 0)
    if erase.ndim == 3:
        erase = erase[:, :, 0]
    labels = np.full(erase.shape, POSITIVE, dtype=np.int8)

    covered = np.zeros(erase.shape, dtype=bool)
    if negative_categories is None:
        erased_cats = {
            seg.category
            for seg in segments
            if seg.kind == THING and (seg.mask.astype(bool) & erase).any()
        }
        negative = [
            seg
            for seg in segments
            if seg.kind == THING or seg.category in erased_cats
        ]
    else:
        negative = [seg for seg in segments if seg.category in negative_categories]

    for seg in segments:
        if seg.mask.shape != erase.shape:
            raise ShapeMismatch(
                f"segment {seg.id} mask {seg.mask.shape} vs erase mask {erase.shape}"
            )
        covered |= seg.mask.astype(bool)
    for seg in negative:
        labels[seg.mask.astype(bool)] = NEGATIVE
    labels[erase] = MASK

    if segments and not covered.all():
        warnings.warn(
            "panoptic segments leave unlabeled pixels; treating them as positive",
            CoverageGapWarning,
        )
    return LabelMap(labels=labels)


def downsample_label_map(lm: LabelMap, target_h: int, target_w: int) -> LabelMap:
    """Pool a label map down to a coarser attention grid.

    Each target cell takes the highest-priority label among the source
    pixels it covers: MASK if any, else NEGATIVE if any, else POSITIVE.
    An object pixel therefore never dissolves into background at coarse
    resolutions.
    """
    h, w = lm.h, lm.w
    if target_h > h or target_w > w or target_h < 1 or target_w < 1:
        raise InvalidTarget(
            f"target {target_h}x{target_w} must be within source {h}x{w}"
        )
    if (target_h, target_w) == (h, w):
        return LabelMap(labels=lm.labels.copy())

    out = np.empty((target_h, target_w), dtype=np.int8)
    row_edges = (np.arange(target_h + 1) * h) // target_h
    col_edges = (np.arange(target_w + 1) * w) // target_w
    for i in range(target_h):
        for j in range(target_w):
            block = lm.labels[
                row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]
            ]
            out[i, j] = block.min()  # label codes are ordered by priority
    return LabelMap(labels=out)


def build_pair_masks(lm: LabelMap) -> tuple[np.ndarray, np.ndarray]:
    """Binary N*N (query, key) masks from the label vector; see module docs."""
    lab = lm.flat()
    is_m = lab == MASK
    is_p = lab == POSITIVE
    is_n = lab == NEGATIVE

    mask_pos = (
        np.outer(is_m, is_p) | np.outer(is_p, is_m | is_p)
    ).astype(np.float64)
    mask_neg = (
        np.outer(is_m, is_m | is_n) | np.outer(is_n, is_m)
    ).astype(np.float64)
    return mask_pos, mask_neg


def modulation_weights(
    scores: np.ndarray, cfg: RefocusConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row modulation weights from the raw similarity matrix Q K^T.

    The row max and min are replicated along the key axis; W_pos blends
    them with lambda_pos and W_neg scales the max with lambda_neg.
    """
    if scores.ndim != 2:
        raise ShapeMismatch(f"scores must be 2-D, got {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    s_max = np.max(scores, axis=1, keepdims=True)
    s_min = np.min(scores, axis=1, keepdims=True)
    ones = np.ones((1, scores.shape[1]))
    w_pos = ((1.0 - cfg.lambda_pos) * s_min + cfg.lambda_pos * s_max) * ones
    w_neg = (cfg.lambda_neg * s_max) * ones
    return w_pos, w_neg


def build_modulation(
    lm: LabelMap, scores: np.ndarray, cfg: RefocusConfig
) -> AttentionModulation:
    """Assemble M = W_pos * Mask_pos - W_neg * Mask_neg for one layer."""
    n = lm.h * lm.w
    if scores.shape != (n, n):
        raise ShapeMismatch(
            f"scores {scores.shape} do not match {n} tokens of the label map"
        )
    mask_pos, mask_neg = build_pair_masks(lm)
    w_pos, w_neg = modulation_weights(scores, cfg)
    m = w_pos * mask_pos - w_neg * mask_neg
    return AttentionModulation(
        mask_pos=mask_pos, mask_neg=mask_neg, w_pos=w_pos, w_neg=w_neg, m=m
    )


def refocused_attention(
    q: np.ndarray, k: np.ndarray, mod: AttentionModulation, d: int
) -> np.ndarray:
    """Row-stochastic attention with the logit matrix M added pre-scaling:

        A' = softmax((q k^T + M) / sqrt(d))
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise ShapeMismatch(f"incompatible q {q.shape} and k {k.shape}")
    logits = (q @ k.T + mod.m) / np.sqrt(float(d))
    if logits.shape != mod.m.shape:
        raise ShapeMismatch(f"M {mod.m.shape} does not match scores {logits.shape}")
    return softmax_rows(logits)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def window_active(t_normalized: float, cfg: RefocusConfig) -> bool:
    """Whether modulation applies at normalized step time t (1.0 = first step).

    Both window boundaries are inclusive.
    """
    if not 0.0 <= t_normalized <= 1.0:
        raise ValueError(f"t_normalized must be in [0, 1], got {t_normalized}")
    return cfg.window_lo <= t_normalized <= cfg.window_hi


class RefocusHook:
    """Per-denoise-run modulation state handed to the sampling loop.

    Holds the full-resolution label map and lazily pools it down to each
    attention layer's grid; pair masks are cached per grid while the
    weights are recomputed each call from the layer's current raw scores.
    The hook is immutable apart from that cache and safe to share across
    steps of one run.
    """

    def __init__(self, label_map: LabelMap, config: RefocusConfig | None = None):
        self.label_map = label_map
        self.config = config or RefocusConfig()
        self._pair_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def active(self, t_normalized: float) -> bool:
        return self.config.enabled and window_active(t_normalized, self.config)

    def pair_masks(self, grid_hw: tuple[int, int]):
        key = (int(grid_hw[0]), int(grid_hw[1]))
        if key not in self._pair_cache:
            lm = downsample_label_map(self.label_map, key[0], key[1])
            self._pair_cache[key] = build_pair_masks(lm)
        return self._pair_cache[key]

    def __call__(self, scores: np.ndarray, grid_hw: tuple[int, int]) -> np.ndarray:
        """Return the additive logit matrix M for one self-attention layer."""
        mask_pos, mask_neg = self.pair_masks(grid_hw)
        if scores.shape != mask_pos.shape:
            raise ShapeMismatch(
                f"scores {scores.shape} do not match grid {grid_hw}"
            )
        w_pos, w_neg = modulation_weights(scores, self.config)
        return w_pos * mask_pos - w_neg * mask_neg
