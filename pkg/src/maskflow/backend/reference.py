"""Deterministic color flood-fill backend.

This is the desk-scale stand-in for a learned promptable video segmenter:
a prompt selects the 4-connected component of pixels whose color lies within
a per-channel tolerance of the clicked pixel, and propagation re-seeds that
flood fill frame by frame from the previous mask's centroid. Everything is
exact integer arithmetic on uint8 colors, so outputs are bit-identical
across runs, which is what makes the full pipeline testable offline.
"""

import time
from typing import Callable

import numpy as np
from scipy import ndimage

from ..dataset.video import VideoDataset
from ..errors import ValidationError
from .base import (
    POSITIVE,
    BackendCapabilities,
    ObjectSeed,
    PropagationResult,
    validate_prompts,
)

# 4-connectivity: components touch through edges, not corners.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

DEFAULT_TOLERANCE = 12
DEFAULT_WINDOW_RADIUS = 16


def _color_match(frame: np.ndarray, color: np.ndarray, tolerance: int) -> np.ndarray:
    distance = np.abs(frame.astype(np.int16) - color.astype(np.int16)).max(axis=2)
    return distance <= tolerance


def _component_at(match: np.ndarray, x: int, y: int) -> np.ndarray:
    labels, _ = ndimage.label(match, structure=_CROSS)
    return labels == labels[y, x]


def reference_segment(frame: np.ndarray, prompts, tolerance: int = DEFAULT_TOLERANCE) -> np.ndarray:
    """Union of positive-point components minus negative-point components.

    Each point contributes the 4-connected component of pixels whose color
    distance (max over channels of absolute difference) from that point's
    own color is within ``tolerance``. Negative components are subtracted
    after the union, so a negative click always wins over overlap.
    """
    height, width = frame.shape[:2]
    prompts = validate_prompts(prompts, width, height)
    mask = np.zeros((height, width), dtype=bool)
    for p in prompts:
        if p.polarity != POSITIVE:
            continue
        match = _color_match(frame, frame[p.y, p.x], tolerance)
        mask |= _component_at(match, p.x, p.y)
    for p in prompts:
        if p.polarity == POSITIVE:
            continue
        match = _color_match(frame, frame[p.y, p.x], tolerance)
        mask &= ~_component_at(match, p.x, p.y)
    return mask


def reference_propagate_step(
    prev_mask: np.ndarray,
    next_frame: np.ndarray,
    anchor_color: np.ndarray,
    tolerance: int = DEFAULT_TOLERANCE,
    window_radius: int = DEFAULT_WINDOW_RADIUS,
) -> np.ndarray:
    """Re-seed the flood fill on the next frame near the previous centroid.

    Searches a square window of ``window_radius`` around the previous mask's
    centroid for the pixel closest to the centroid whose color matches the
    anchor color within ``tolerance`` (ties broken row-major), then segments
    from that pixel. Returns an all-false mask when nothing matches, which
    callers treat as the object being lost.
    """
    if not prev_mask.any():
        raise ValidationError("previous mask is empty; object already lost")
    height, width = next_frame.shape[:2]
    ys, xs = np.nonzero(prev_mask)
    cy = int(round(ys.mean()))
    cx = int(round(xs.mean()))

    y0, y1 = max(0, cy - window_radius), min(height, cy + window_radius + 1)
    x0, x1 = max(0, cx - window_radius), min(width, cx + window_radius + 1)
    window = next_frame[y0:y1, x0:x1]
    match = _color_match(window, anchor_color, tolerance)
    if not match.any():
        return np.zeros((height, width), dtype=bool)

    wy, wx = np.nonzero(match)
    dist2 = (wy + y0 - cy) ** 2 + (wx + x0 - cx) ** 2
    best = np.lexsort((wx, wy, dist2))[0]
    seed_x = int(wx[best] + x0)
    seed_y = int(wy[best] + y0)

    full_match = _color_match(next_frame, anchor_color, tolerance)
    return _component_at(full_match, seed_x, seed_y)


class ReferenceBackend:
    """Pure, reentrant backend built on :func:`reference_segment`."""

    def __init__(
        self,
        tolerance: int = DEFAULT_TOLERANCE,
        window_radius: int = DEFAULT_WINDOW_RADIUS,
    ):
        self.tolerance = tolerance
        self.window_radius = window_radius

    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(name="reference", supports_video=True, max_objects=None)

    def predict_frame(self, frame: np.ndarray, prompts) -> np.ndarray:
        return reference_segment(frame, prompts, self.tolerance)

    def propagate(
        self,
        video: VideoDataset,
        seeds: dict[int, ObjectSeed],
        progress: Callable[[int, int], None] | None = None,
    ) -> PropagationResult:
        """Track every seeded object from its anchor frame to the last frame.

        A lost object (no color match inside the search window) yields empty
        masks from the losing frame onward and is flagged in ``lost_at``;
        other objects are unaffected.
        """
        result = PropagationResult(masks={})
        last = video.frame_count - 1
        total = sum(last - seed.anchor_frame + 1 for seed in seeds.values())
        done = 0
        for object_id, seed in sorted(seeds.items()):
            if not seed.anchor_mask.any():
                raise ValidationError(f"object {object_id}: anchor mask is empty")
            if not 0 <= seed.anchor_frame <= last:
                raise ValidationError(
                    f"object {object_id}: anchor frame {seed.anchor_frame} out of range"
                )
            positives = [p for p in seed.prompts if p.polarity == POSITIVE]
            if not positives:
                raise ValidationError(
                    f"object {object_id}: no positive prompt to anchor propagation",
                    code="no_positive_points",
                )
            anchor_point = positives[0]
            anchor_frame_img = video.frame(seed.anchor_frame)
            anchor_color = anchor_frame_img[anchor_point.y, anchor_point.x]

            mask = seed.anchor_mask
            result.masks[(seed.anchor_frame, object_id)] = mask
            done += 1
            if progress:
                progress(done, total)

            lost = False
            for frame_index in range(seed.anchor_frame + 1, last + 1):
                started = time.monotonic()
                if lost:
                    mask = np.zeros(mask.shape, dtype=bool)
                else:
                    mask = reference_propagate_step(
                        mask,
                        video.frame(frame_index),
                        anchor_color,
                        self.tolerance,
                        self.window_radius,
                    )
                    if not mask.any():
                        lost = True
                        result.lost_at[object_id] = frame_index
                result.masks[(frame_index, object_id)] = mask
                result.per_frame_seconds.append(time.monotonic() - started)
                done += 1
                if progress:
                    progress(done, total)
        return result
