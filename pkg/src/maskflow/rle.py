"""Run-length encoding of binary masks.

The wire and persistence format for masks everywhere in the toolkit:
a mask is flattened row-major and the TRUE pixels are stored as
``(start, length)`` runs, sorted by start, non-overlapping and
non-adjacent (i.e. maximal runs).
"""

import numpy as np

from .errors import ValidationError


def encode_rle(mask: np.ndarray) -> list[tuple[int, int]]:
    """Encode a 2-D boolean mask as maximal row-major runs of true pixels."""
    if mask.ndim != 2:
        raise ValidationError(f"expected a 2-D mask, got shape {mask.shape}")
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    # Transitions of the padded sequence 0,flat,0 give run boundaries.
    padded = np.concatenate(([False], flat, [False]))
    diff = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1)
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]


def decode_rle(runs: list[tuple[int, int]], width: int, height: int) -> np.ndarray:
    """Decode runs into a ``(height, width)`` boolean mask.

    Rejects runs that are unsorted, overlapping, adjacent, or out of range,
    so a corrupted payload never silently yields a plausible mask.
    """
    if width <= 0 or height <= 0:
        raise ValidationError(f"invalid mask dimensions {width}x{height}")
    total = width * height
    flat = np.zeros(total, dtype=bool)
    prev_end = -1  # last covered index, -1 when nothing yet
    for start, length in runs:
        if length <= 0:
            raise ValidationError(f"run at {start} has non-positive length {length}")
        if start <= prev_end + 1 and prev_end >= 0:
            raise ValidationError(f"run at {start} overlaps or touches the previous run")
        if start < 0 or start + length > total:
            raise ValidationError(
                f"run ({start},{length}) exceeds mask size {width}x{height}"
            )
        flat[start : start + length] = True
        prev_end = start + length - 1
    return flat.reshape(height, width)


def runs_to_jsonable(runs: list[tuple[int, int]]) -> list[list[int]]:
    return [[int(s), int(n)] for s, n in runs]


def runs_from_jsonable(data: list) -> list[tuple[int, int]]:
    try:
        return [(int(s), int(n)) for s, n in data]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed run list: {exc}") from exc
