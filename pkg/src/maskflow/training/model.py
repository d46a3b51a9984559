"""Toy promptable segmenter with handwritten analytic gradients.

Three named parameter groups mirror the fine-tuned architecture's split:
``image_encoder`` (frame convolution), ``prompt_encoder`` (convolution over
a rasterized point-prompt heat channel), and ``mask_decoder`` (feature to
per-pixel logit). Small enough to gradient-check against finite differences,
big enough to learn the synthetic fixtures end to end.

All math is float64 numpy; convolutions are stride-1 with same padding.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ValidationError

PARAM_GROUPS = ("image_encoder", "prompt_encoder", "mask_decoder")


@dataclass(frozen=True)
class ParamPartition:
    frozen: frozenset[str]
    trainable: frozenset[str]


# The fine-tuning recipe: keep the image encoder's priors, adapt the rest.
DEFAULT_PARTITION = ParamPartition(
    frozen=frozenset({"image_encoder"}),
    trainable=frozenset({"prompt_encoder", "mask_decoder"}),
)


def _conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Same-padding stride-1 convolution. x: (Cin,H,W), weight: (Cout,Cin,k,k)."""
    k = weight.shape[-1]
    pad = k // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))  # (Cin,H,W,k,k)
    out = np.einsum("chwij,ocij->ohw", windows, weight) + bias[:, None, None]
    return out, (padded, windows)


def _conv_backward(cache, weight: np.ndarray, dout: np.ndarray):
    """Gradients of a same-padding convolution w.r.t. weight, bias, input."""
    padded, windows = cache
    k = weight.shape[-1]
    pad = k // 2
    _, height, width = padded.shape
    d_weight = np.einsum("ohw,chwij->ocij", dout, windows)
    d_bias = dout.sum(axis=(1, 2))
    d_padded = np.zeros_like(padded)
    out_h, out_w = dout.shape[1:]
    for i in range(k):
        for j in range(k):
            d_padded[:, i : i + out_h, j : j + out_w] += np.einsum(
                "ohw,oc->chw", dout, weight[:, :, i, j]
            )
    d_x = d_padded[:, pad : height - pad, pad : width - pad]
    return d_weight, d_bias, d_x


class PointPromptNet:
    """(frame, prompt heat map) -> per-pixel mask logits."""

    def __init__(self, channels: int = 8, kernel: int = 3, seed: int = 0):
        if kernel % 2 != 1:
            raise ValidationError("kernel size must be odd for same padding")
        rng = np.random.default_rng(seed)
        scale = 0.3
        self.channels = channels
        self.kernel = kernel
        self.params: dict[str, np.ndarray] = {
            "image_encoder/weight": rng.normal(0.0, scale, (channels, 3, kernel, kernel)),
            "image_encoder/bias": np.zeros(channels),
            "prompt_encoder/weight": rng.normal(0.0, scale, (channels, 1, kernel, kernel)),
            "prompt_encoder/bias": np.zeros(channels),
            "mask_decoder/weight": rng.normal(0.0, scale, (1, channels, kernel, kernel)),
            "mask_decoder/bias": np.zeros(1),
        }

    # ---- parameter bookkeeping ----

    def group_of(self, name: str) -> str:
        return name.split("/", 1)[0]

    def groups(self) -> tuple[str, ...]:
        return PARAM_GROUPS

    def clone_params(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.params.items()}

    # ---- forward / backward ----

    def forward(self, frame: np.ndarray, heat: np.ndarray):
        """Compute logits; returns (logits, cache) with cache for backward.

        ``frame`` is (H, W, 3) float in [0, 1]; ``heat`` is (H, W) float.
        """
        x_img = np.transpose(frame, (2, 0, 1)).astype(np.float64)
        x_heat = heat[None, :, :].astype(np.float64)
        f_img, cache_img = _conv_forward(
            x_img, self.params["image_encoder/weight"], self.params["image_encoder/bias"]
        )
        f_pt, cache_pt = _conv_forward(
            x_heat, self.params["prompt_encoder/weight"], self.params["prompt_encoder/bias"]
        )
        hidden = np.tanh(f_img + f_pt)
        logits, cache_dec = _conv_forward(
            hidden, self.params["mask_decoder/weight"], self.params["mask_decoder/bias"]
        )
        cache = (cache_img, cache_pt, cache_dec, hidden)
        return logits[0], cache

    def backward(self, cache, d_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of every parameter given d(loss)/d(logits)."""
        cache_img, cache_pt, cache_dec, hidden = cache
        dw_dec, db_dec, d_hidden = _conv_backward(
            cache_dec, self.params["mask_decoder/weight"], d_logits[None, :, :]
        )
        d_pre = d_hidden * (1.0 - hidden**2)
        dw_img, db_img, _ = _conv_backward(
            cache_img, self.params["image_encoder/weight"], d_pre
        )
        dw_pt, db_pt, _ = _conv_backward(
            cache_pt, self.params["prompt_encoder/weight"], d_pre
        )
        return {
            "image_encoder/weight": dw_img,
            "image_encoder/bias": db_img,
            "prompt_encoder/weight": dw_pt,
            "prompt_encoder/bias": db_pt,
            "mask_decoder/weight": dw_dec,
            "mask_decoder/bias": db_dec,
        }

    def predict(self, frame: np.ndarray, heat: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(frame, heat)
        return logits > 0.0


def rasterize_prompts(prompts, height: int, width: int, sigma: float = 2.0) -> np.ndarray:
    """Render point prompts as a signed Gaussian heat map (+ positive, - negative)."""
    heat = np.zeros((height, width), dtype=np.float64)
    ys = np.arange(height)[:, None]
    xs = np.arange(width)[None, :]
    for p in prompts:
        bump = np.exp(-((xs - p.x) ** 2 + (ys - p.y) ** 2) / (2.0 * sigma**2))
        heat += bump if p.polarity == "positive" else -bump
    return heat


def partition_parameters(model: PointPromptNet, partition: ParamPartition) -> PointPromptNet:
    """Mark groups frozen/trainable on the model; updates skip frozen groups."""
    known = set(model.groups())
    unknown = (set(partition.frozen) | set(partition.trainable)) - known
    if unknown:
        raise ValidationError(f"unknown parameter groups: {sorted(unknown)}")
    if partition.frozen & partition.trainable:
        raise ValidationError(
            f"groups both frozen and trainable: {sorted(partition.frozen & partition.trainable)}"
        )
    if set(partition.frozen) | set(partition.trainable) != known:
        missing = known - (set(partition.frozen) | set(partition.trainable))
        raise ValidationError(f"partition does not cover groups: {sorted(missing)}")
    model.frozen_groups = frozenset(partition.frozen)
    return model


def trainable_params(model: PointPromptNet) -> dict[str, np.ndarray]:
    frozen = getattr(model, "frozen_groups", frozenset())
    return {
        name: value for name, value in model.params.items() if model.group_of(name) not in frozen
    }
