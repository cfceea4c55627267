"""Exception types shared across the toolkit.

Every failure a caller is expected to handle has its own class so that
tests and the job service can match on type rather than message text.
"""


class EraserError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(EraserError):
    """Array arguments disagree on shape where they must match."""


class InvalidSchedule(EraserError):
    """Noise-schedule bounds violated (T < 1 or betas outside (0, 1))."""


class InvalidStrength(EraserError):
    """Denoising strength outside (0, 1]."""


class InpainterUnavailable(EraserError):
    """The coarse pixel-space inpainter client failed or is absent."""


class EncodeFailure(EraserError):
    """The VAE client failed to encode or decode."""


class DenoiserFailure(EraserError):
    """Denoiser raised during the sampling loop; carries the step index."""

    def __init__(self, step, cause):
        super().__init__(f"denoiser failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


class InvalidTarget(EraserError):
    """Label-map downsampling target larger than the source grid."""


class NoBackgroundTag(EraserError):
    """Prompt construction called with an empty tag list."""


class DivergedLoss(EraserError):
    """Training loss became non-finite."""


class NonFiniteLoss(DivergedLoss):
    """Single training step produced a non-finite loss."""


class CorruptDataset(EraserError):
    """Dataset directory is empty, unreadable, or fails validation."""


class CheckpointWriteFailure(EraserError):
    """Checkpoint archive could not be written."""


class NoErasableObject(EraserError):
    """Scene has no thing-segment inside the eligible area range."""


class PlacementNotFound(EraserError):
    """No background placement found within the retry budget."""


class VlmUnavailable(EraserError):
    """Caption client failed; the sample is written flagged instead."""


class IoFailure(EraserError):
    """Dataset shard or manifest could not be written."""


class DegenerateImage(EraserError):
    """Image with a zero-sized dimension."""


class ExtractorUnavailable(EraserError):
    """Feature-extractor client absent or failing."""


class SegmenterUnavailable(EraserError):
    """Panoptic segmentation client absent or failing."""


class EmptyMask(EraserError):
    """Erase request with a mask that selects nothing."""


class OversizeInput(EraserError):
    """Input image exceeds the configured size limit."""


class NotFound(EraserError):
    """Unknown job id."""


class QueueFull(EraserError):
    """Job queue at capacity."""


class StageError(EraserError):
    """Pipeline failure tagged with exactly one stage name.

    Stages: segment, init, encode, denoise, decode, composite.
    """

    STAGES = ("segment", "init", "encode", "denoise", "decode", "composite")

    def __init__(self, stage, cause):
        if stage not in self.STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class CoverageGapWarning(UserWarning):
    """Panoptic segments do not cover every pixel; gaps become positive."""
