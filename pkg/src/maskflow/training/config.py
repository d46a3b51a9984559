"""Fine-tuning loop configuration: schedule, accumulation, warm-up."""

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    accumulation_steps: int = 4
    decay_interval: int = 500
    decay_factor: float = 0.5
    warmup_frames: int = 5
    max_steps: int = 100
    seed: int = 0
    # Loss mix for the reference trainer; a standard BCE + soft-Dice blend.
    bce_weight: float = 1.0
    dice_weight: float = 1.0
    # Inert here; real-model trainers may honor it.
    mixed_precision: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0 or self.weight_decay <= 0:
            raise ValidationError("learning_rate and weight_decay must be positive")
        if self.accumulation_steps < 1:
            raise ValidationError("accumulation_steps must be >= 1")
        if self.decay_interval < 1:
            raise ValidationError("decay_interval must be >= 1")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValidationError("decay_factor must be in (0, 1)")
        if self.warmup_frames < 0 or self.max_steps < 0:
            raise ValidationError("warmup_frames and max_steps must be >= 0")


def lr_at(optimizer_step: int, cfg: TrainingConfig) -> float:
    """Step-decay schedule: piecewise constant, halving-style drops.

    lr(step) = learning_rate * decay_factor ** floor(step / decay_interval)
    """
    if optimizer_step < 0:
        raise ValidationError(f"optimizer step must be >= 0, got {optimizer_step}")
    return cfg.learning_rate * cfg.decay_factor ** (optimizer_step // cfg.decay_interval)


def apply_warmup_policy(frame_count: int, cfg: TrainingConfig) -> np.ndarray:
    """Per-frame loss weights for one video.

    The first ``warmup_frames`` frames get zero loss weight; predictions on
    them still run so temporal state settles before losses start counting.
    """
    if frame_count < 1:
        raise ValidationError("video has no frames")
    weights = np.ones(frame_count, dtype=np.float64)
    cutoff = min(cfg.warmup_frames, frame_count)
    weights[:cutoff] = 0.0
    if cutoff == frame_count and cfg.warmup_frames > 0:
        logger.warning(
            "warm-up (%d frames) covers the whole %d-frame video; all loss weights are zero",
            cfg.warmup_frames,
            frame_count,
        )
    return weights
