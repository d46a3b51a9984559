"""Reference training loop, loss, and checkpoint format.

The loop wires together the full fine-tuning contract: parameter partition,
per-video warm-up loss weights, per-frame prompt-to-mask losses, gradient
accumulation, and scheduled optimizer updates, all exercised on synthetic
videos with exact ground truth.

Checkpoint file layout (binary, little-endian tensors)::

    magic 'MFCK'  version:1
    group_count:u16   then per group: name_len:u16, name utf-8
    tensor_count:u32  then per tensor:
        name_len:u16, name utf-8 ('group/param'),
        ndim:u8, dims:u32 * ndim, float32 data

A text sidecar ``<checkpoint>.manifest.txt`` echoes the config and final
metrics.
"""

import csv
import struct
from pathlib import Path

import numpy as np

from ..dataset.classes import merge_to_binary
from ..dataset.video import VideoDataset
from ..errors import MigrationError, ParseError, TrainingDiverged
from .config import TrainingConfig, apply_warmup_policy, lr_at
from .model import (
    DEFAULT_PARTITION,
    ParamPartition,
    PointPromptNet,
    partition_parameters,
    rasterize_prompts,
    trainable_params,
)
from .optim import TrainState, accumulate_and_step, init_state

CHECKPOINT_MAGIC = b"MFCK"
CHECKPOINT_VERSION = 1

_DICE_EPS = 1.0


def segmentation_loss(logits: np.ndarray, target: np.ndarray, bce_weight: float, dice_weight: float):
    """Weighted per-pixel BCE plus soft Dice; returns (loss, d_loss/d_logits)."""
    target = target.astype(np.float64)
    n = logits.size
    # Numerically stable BCE with logits.
    bce = np.maximum(logits, 0.0) - logits * target + np.log1p(np.exp(-np.abs(logits)))
    bce_loss = bce.sum() / n
    probs = 1.0 / (1.0 + np.exp(-logits))
    d_bce = (probs - target) / n

    overlap = (probs * target).sum()
    total = probs.sum() + target.sum()
    dice = (2.0 * overlap + _DICE_EPS) / (total + _DICE_EPS)
    dice_loss = 1.0 - dice
    d_dice_d_prob = -(2.0 * target * (total + _DICE_EPS) - (2.0 * overlap + _DICE_EPS)) / (
        total + _DICE_EPS
    ) ** 2
    d_dice = d_dice_d_prob * probs * (1.0 - probs)

    loss = bce_weight * bce_loss + dice_weight * dice_loss
    d_logits = bce_weight * d_bce + dice_weight * d_dice
    return loss, d_logits


def _prompt_for_frame(gt_mask: np.ndarray, rng: np.random.Generator):
    """One positive click on a random foreground pixel (frame center if empty)."""
    from ..backend.base import PromptPoint

    ys, xs = np.nonzero(gt_mask)
    if len(ys) == 0:
        y, x = gt_mask.shape[0] // 2, gt_mask.shape[1] // 2
    else:
        pick = int(rng.integers(len(ys)))
        y, x = int(ys[pick]), int(xs[pick])
    return PromptPoint(x=x, y=y, polarity="positive", frame_index=0, object_id=1)


def train_reference(
    model: PointPromptNet,
    datasets: list[VideoDataset],
    cfg: TrainingConfig,
    partition: ParamPartition = DEFAULT_PARTITION,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
) -> TrainState:
    """Run the full loop until ``cfg.max_steps`` optimizer updates.

    Videos are visited round-robin, frames in temporal order; the first
    ``warmup_frames`` of each video still run the forward pass but
    contribute zero gradient. ``loss_history`` records the raw (unweighted)
    loss once per micro step.
    """
    partition_parameters(model, partition)
    state = init_state(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    log_rows = []

    while state.optimizer_step < cfg.max_steps:
        progressed = False
        for video in datasets:
            weights = apply_warmup_policy(video.frame_count, cfg)
            for frame_index in range(video.frame_count):
                if state.optimizer_step >= cfg.max_steps:
                    break
                gt = merge_to_binary(video.ground_truth[frame_index])
                frame = video.frame(frame_index).astype(np.float64) / 255.0
                prompt = _prompt_for_frame(gt, rng)
                heat = rasterize_prompts([prompt], *gt.shape)
                logits, cache = model.forward(frame, heat)
                loss, d_logits = segmentation_loss(
                    logits, gt, cfg.bce_weight, cfg.dice_weight
                )
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss {loss} at micro step {state.micro_step}, "
                        f"optimizer step {state.optimizer_step}, lr {state.current_lr}"
                    )
                weight = weights[frame_index]
                if weight == 0.0:
                    grads = {name: np.zeros_like(p) for name, p in trainable_params(model).items()}
                else:
                    full = model.backward(cache, d_logits * weight)
                    grads = {name: full[name] for name in trainable_params(model)}
                accumulate_and_step(state, model, grads, cfg)
                state.loss_history.append(float(loss))
                log_rows.append(
                    (state.micro_step, state.optimizer_step, state.current_lr, float(loss))
                )
                progressed = True
        if not progressed:
            break

    if log_path is not None:
        with Path(log_path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["micro_step", "optimizer_step", "lr", "loss"])
            writer.writerows(log_rows)
    if checkpoint_path is not None:
        metrics = {
            "final_loss": state.loss_history[-1] if state.loss_history else float("nan"),
            "train_iou": training_iou(model, datasets, rng),
        }
        save_checkpoint(checkpoint_path, model, cfg=cfg, metrics=metrics)
    return state


def training_iou(model: PointPromptNet, datasets: list[VideoDataset], rng=None) -> float:
    """Mean IoU of thresholded predictions against GT over all frames."""
    from ..metrics import iou

    rng = rng or np.random.default_rng(0)
    scores = []
    for video in datasets:
        for frame_index in range(video.frame_count):
            gt = merge_to_binary(video.ground_truth[frame_index])
            frame = video.frame(frame_index).astype(np.float64) / 255.0
            prompt = _prompt_for_frame(gt, rng)
            heat = rasterize_prompts([prompt], *gt.shape)
            scores.append(iou(model.predict(frame, heat), gt))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------

def save_checkpoint(
    path: str | Path,
    model: PointPromptNet,
    cfg: TrainingConfig | None = None,
    metrics: dict | None = None,
) -> Path:
    path = Path(path)
    parts = [CHECKPOINT_MAGIC, bytes([CHECKPOINT_VERSION])]
    groups = model.groups()
    parts.append(struct.pack(">H", len(groups)))
    for group in groups:
        raw = group.encode("utf-8")
        parts.append(struct.pack(">H", len(raw)) + raw)
    parts.append(struct.pack(">I", len(model.params)))
    for name in sorted(model.params):
        raw = name.encode("utf-8")
        tensor = np.ascontiguousarray(model.params[name], dtype="<f4")
        parts.append(struct.pack(">H", len(raw)) + raw)
        parts.append(bytes([tensor.ndim]))
        for dim in tensor.shape:
            parts.append(struct.pack(">I", dim))
        parts.append(tensor.tobytes())
    path.write_bytes(b"".join(parts))

    manifest_lines = []
    if cfg is not None:
        for field_name in cfg.__dataclass_fields__:
            manifest_lines.append(f"config.{field_name} = {getattr(cfg, field_name)}")
    for key, value in (metrics or {}).items():
        manifest_lines.append(f"metrics.{key} = {value}")
    Path(f"{path}.manifest.txt").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path: str | Path) -> tuple[tuple[str, ...], dict[str, np.ndarray]]:
    """Read a checkpoint; returns (group names, float32 tensors by name)."""
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    version = data[4]
    if version != CHECKPOINT_VERSION:
        raise MigrationError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    offset = 5
    (group_count,) = struct.unpack_from(">H", data, offset)
    offset += 2
    groups = []
    for _ in range(group_count):
        (name_len,) = struct.unpack_from(">H", data, offset)
        offset += 2
        groups.append(data[offset : offset + name_len].decode("utf-8"))
        offset += name_len
    (tensor_count,) = struct.unpack_from(">I", data, offset)
    offset += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(tensor_count):
        (name_len,) = struct.unpack_from(">H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        ndim = data[offset]
        offset += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from(">I", data, offset)
            offset += 4
            shape.append(dim)
        size = int(np.prod(shape)) if shape else 1
        tensor = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(shape)
        offset += size * 4
        tensors[name] = tensor.copy()
    if offset != len(data):
        raise ParseError(f"{path}: {len(data) - offset} trailing bytes")
    return tuple(groups), tensors
