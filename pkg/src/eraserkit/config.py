"""Erase-pipeline configuration.

Configuration travels as a flat mapping with dotted keys
(``diffusion.T``, ``refocus.lambda_pos``, ...) over the wire and the CLI;
in code it is a pair of dataclasses. The hash of the canonical JSON form
is recorded on job submission and re-checked at completion.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .refocus import RefocusConfig


@dataclass
class ErasureConfig:
    """Full configuration of one erase request."""

    T: int = 50
    strength: float = 0.9
    sampler_seed: int = 0
    guidance_scale: float = 7.5
    refocus: RefocusConfig = field(default_factory=RefocusConfig)
    max_side: int = 2048
    feather_px: int = 4

    def to_flat(self) -> dict:
        return {
            "diffusion.T": self.T,
            "diffusion.strength": self.strength,
            "diffusion.sampler_seed": self.sampler_seed,
            "diffusion.guidance_scale": self.guidance_scale,
            "refocus.lambda_pos": self.refocus.lambda_pos,
            "refocus.lambda_neg": self.refocus.lambda_neg,
            "refocus.window_lo": self.refocus.window_lo,
            "refocus.window_hi": self.refocus.window_hi,
            "refocus.enabled": self.refocus.enabled,
            "service.max_side": self.max_side,
            "service.feather_px": self.feather_px,
        }

    @classmethod
    def from_flat(cls, flat: dict | None) -> "ErasureConfig":
        flat = dict(flat or {})
        cfg = cls()
        refocus = RefocusConfig(
            lambda_pos=float(flat.pop("refocus.lambda_pos", cfg.refocus.lambda_pos)),
            lambda_neg=float(flat.pop("refocus.lambda_neg", cfg.refocus.lambda_neg)),
            window_lo=float(flat.pop("refocus.window_lo", cfg.refocus.window_lo)),
            window_hi=float(flat.pop("refocus.window_hi", cfg.refocus.window_hi)),
            enabled=bool(flat.pop("refocus.enabled", cfg.refocus.enabled)),
        )
        out = cls(
            T=int(flat.pop("diffusion.T", cfg.T)),
            strength=float(flat.pop("diffusion.strength", cfg.strength)),
            sampler_seed=int(flat.pop("diffusion.sampler_seed", cfg.sampler_seed)),
            guidance_scale=float(flat.pop("diffusion.guidance_scale", cfg.guidance_scale)),
            refocus=refocus,
            max_side=int(flat.pop("service.max_side", cfg.max_side)),
            feather_px=int(flat.pop("service.feather_px", cfg.feather_px)),
        )
        if flat:
            raise ValueError(f"unknown config keys: {sorted(flat)}")
        return out

    def config_hash(self) -> str:
        canon = json.dumps(self.to_flat(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()
