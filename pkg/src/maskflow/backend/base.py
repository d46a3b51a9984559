"""Segmentation backend contract.

A backend answers two questions: "given these point prompts, what is the
mask on this frame?" and "given seeded objects, what are their masks on
every later frame?". The reference backend answers them with deterministic
color flood fill; real promptable video models attach through the adapter
wire protocol. Both sides speak this interface.
"""

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from ..dataset.video import VideoDataset
from ..errors import ValidationError

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class PromptPoint:
    x: int
    y: int
    polarity: str  # POSITIVE or NEGATIVE
    frame_index: int
    object_id: int

    def __post_init__(self):
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValidationError(f"polarity must be positive/negative, got {self.polarity!r}")


@dataclass(frozen=True)
class BackendCapabilities:
    name: str
    supports_video: bool
    max_objects: int | None = None  # None = unbounded

    def __post_init__(self):
        if not self.name:
            raise ValidationError("backend name must be non-empty")


@dataclass(frozen=True)
class ObjectSeed:
    """Everything a backend needs to track one object from its anchor frame."""

    object_id: int
    anchor_frame: int
    anchor_mask: np.ndarray
    prompts: tuple[PromptPoint, ...]


@dataclass
class PropagationResult:
    masks: dict[tuple[int, int], np.ndarray]  # (frame_index, object_id) -> mask
    per_frame_seconds: list[float] = field(default_factory=list)
    lost_at: dict[int, int] = field(default_factory=dict)  # object_id -> first lost frame

    def mask(self, frame_index: int, object_id: int) -> np.ndarray | None:
        return self.masks.get((frame_index, object_id))

    def frames_for(self, object_id: int) -> list[int]:
        return sorted(f for f, o in self.masks if o == object_id)


def validate_prompts(prompts, width: int, height: int) -> list[PromptPoint]:
    """Shared predict_frame precondition: in-bounds, one object, >= 1 positive."""
    prompts = list(prompts)
    if not any(p.polarity == POSITIVE for p in prompts):
        raise ValidationError("at least one positive point is required", code="no_positive_points")
    object_ids = {p.object_id for p in prompts}
    if len(object_ids) > 1:
        raise ValidationError(f"prompts span multiple objects: {sorted(object_ids)}")
    frames = {p.frame_index for p in prompts}
    if len(frames) > 1:
        raise ValidationError(f"prompts span multiple frames: {sorted(frames)}")
    for p in prompts:
        if not (0 <= p.x < width and 0 <= p.y < height):
            raise ValidationError(
                f"point ({p.x},{p.y}) outside {width}x{height} frame",
                code="point_out_of_bounds",
            )
    return prompts


class SegmentationBackend(Protocol):
    def capabilities(self) -> BackendCapabilities: ...

    def predict_frame(self, frame: np.ndarray, prompts) -> np.ndarray: ...

    def propagate(
        self,
        video: VideoDataset,
        seeds: dict[int, ObjectSeed],
        progress: Callable[[int, int], None] | None = None,
    ) -> PropagationResult: ...


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_FACTORIES: dict[str, Callable[..., SegmentationBackend]] = {}


def register_backend(name: str, factory: Callable[..., SegmentationBackend]) -> None:
    _FACTORIES[name] = factory


def create_backend(name: str, **kwargs) -> SegmentationBackend:
    if name not in _FACTORIES:
        raise ValidationError(
            f"unknown backend {name!r}; available: {sorted(_FACTORIES)}",
            code="unknown_backend",
        )
    return _FACTORIES[name](**kwargs)


def available_backends() -> list[str]:
    return sorted(_FACTORIES)
