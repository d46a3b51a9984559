"""Deterministic train/test splitting of video ids."""

import random
from dataclasses import dataclass, field

from ..errors import ValidationError


@dataclass(frozen=True)
class SplitResult:
    train_ids: frozenset[str]
    test_ids: frozenset[str]
    seed: int
    train_order: tuple[str, ...] = field(default=(), compare=False)
    test_order: tuple[str, ...] = field(default=(), compare=False)


def split_videos(video_ids, train_fraction: float, seed: int) -> SplitResult:
    """Shuffle ids with a seeded PRNG and take a train prefix.

    ``|train| = round(train_fraction * N)`` with half-up rounding. The same
    (ids, fraction, seed) always produces the same split.
    """
    ids = list(video_ids)
    if not ids:
        raise ValidationError("no video ids to split")
    if len(set(ids)) != len(ids):
        dupes = sorted({v for v in ids if ids.count(v) > 1})
        raise ValidationError(f"duplicate video ids: {dupes}")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    n_train = int(train_fraction * len(ids) + 0.5)  # half-up, not banker's
    train = shuffled[:n_train]
    test = shuffled[n_train:]
    return SplitResult(
        train_ids=frozenset(train),
        test_ids=frozenset(test),
        seed=seed,
        train_order=tuple(train),
        test_order=tuple(test),
    )
