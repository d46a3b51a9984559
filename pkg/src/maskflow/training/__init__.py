from .config import TrainingConfig, apply_warmup_policy, lr_at
from .loop import (
    load_checkpoint,
    save_checkpoint,
    segmentation_loss,
    train_reference,
    training_iou,
)
from .model import (
    DEFAULT_PARTITION,
    PARAM_GROUPS,
    ParamPartition,
    PointPromptNet,
    partition_parameters,
    rasterize_prompts,
    trainable_params,
)
from .optim import TrainState, accumulate_and_step, init_state

__all__ = [
    "TrainingConfig",
    "apply_warmup_policy",
    "lr_at",
    "load_checkpoint",
    "save_checkpoint",
    "segmentation_loss",
    "train_reference",
    "training_iou",
    "DEFAULT_PARTITION",
    "PARAM_GROUPS",
    "ParamPartition",
    "PointPromptNet",
    "partition_parameters",
    "rasterize_prompts",
    "trainable_params",
    "TrainState",
    "accumulate_and_step",
    "init_state",
]
