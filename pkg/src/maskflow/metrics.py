"""Binary segmentation metrics and per-video reporting.

IoU and pixel accuracy are computed per frame between a predicted binary
mask and the binarized ground truth, then aggregated per video as mean and
population standard deviation across its frames. All pixel counting is done
in exact integers; the single division happens at the end, so results match
a brute-force per-pixel enumeration bit for bit.
"""

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset.classes import merge_to_binary
from .errors import ValidationError


@dataclass(frozen=True)
class FrameMetrics:
    frame_index: int
    iou: float
    pac: float


@dataclass(frozen=True)
class VideoMetricsRecord:
    video_id: str
    per_frame: tuple[FrameMetrics, ...]
    iou_mean: float
    iou_std: float
    pac_mean: float
    pac_std: float


@dataclass(frozen=True)
class ThroughputRecord:
    frames_processed: int
    wall_seconds: float
    fps: float


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.ndim != 2 or gt.ndim != 2:
        raise ValidationError("masks must be 2-D")
    if pred.shape != gt.shape:
        raise ValidationError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union. Two empty masks agree perfectly: 1.0."""
    pred, gt = _check_pair(pred, gt)
    intersection = int(np.count_nonzero(pred & gt))
    union = int(np.count_nonzero(pred | gt))
    if union == 0:
        return 1.0
    return intersection / union


def pac(pred: np.ndarray, gt: np.ndarray) -> float:
    """Pixel accuracy: correctly classified pixels over all pixels."""
    pred, gt = _check_pair(pred, gt)
    correct = int(np.count_nonzero(pred == gt))
    return correct / pred.size


def aggregate_video(video_id: str, series) -> VideoMetricsRecord:
    """Aggregate per-frame metrics as mean and population std."""
    frames = tuple(series)
    if not frames:
        raise ValidationError(f"video {video_id}: empty metrics series")
    ious = [f.iou for f in frames]
    pacs = [f.pac for f in frames]
    return VideoMetricsRecord(
        video_id=video_id,
        per_frame=frames,
        iou_mean=_mean(ious),
        iou_std=_population_std(ious),
        pac_mean=_mean(pacs),
        pac_std=_population_std(pacs),
    )


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _population_std(values: list[float]) -> float:
    mean = _mean(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))


def evaluate_video(
    video_id: str,
    preds: dict[int, np.ndarray],
    gts: dict[int, np.ndarray],
    include: set[int] | None = None,
) -> VideoMetricsRecord:
    """Score predicted masks against multi-class ground truth.

    Ground truth is binarized with :func:`merge_to_binary` restricted to
    ``include``; only frames with a prediction are scored, and every
    predicted frame must have ground truth.
    """
    missing = sorted(set(preds) - set(gts))
    if missing:
        raise ValidationError(f"video {video_id}: predictions without ground truth on frames {missing}")
    if not preds:
        raise ValidationError(f"video {video_id}: no predictions to score")
    series = []
    for frame_index in sorted(preds):
        gt_mask = merge_to_binary(gts[frame_index], include)
        pred_mask = preds[frame_index]
        series.append(
            FrameMetrics(
                frame_index=frame_index,
                iou=iou(pred_mask, gt_mask),
                pac=pac(pred_mask, gt_mask),
            )
        )
    return aggregate_video(video_id, series)


def measure_throughput(frame_timestamps) -> ThroughputRecord:
    """Interval-based throughput: (count - 1) frames over (last - first) seconds."""
    stamps = list(frame_timestamps)
    if len(stamps) < 2:
        raise ValidationError("need at least two timestamps")
    for a, b in zip(stamps, stamps[1:]):
        if b <= a:
            raise ValidationError(f"timestamps not strictly increasing at {a} -> {b}")
    wall = stamps[-1] - stamps[0]
    frames = len(stamps) - 1
    return ThroughputRecord(frames_processed=frames, wall_seconds=wall, fps=frames / wall)


class ThroughputTimer:
    """Collects a monotonic timestamp per processed frame."""

    def __init__(self, clock=time.monotonic):
        self._clock = clock
        self.timestamps: list[float] = []

    def tick(self) -> None:
        self.timestamps.append(self._clock())

    def record(self) -> ThroughputRecord:
        return measure_throughput(self.timestamps)


REPORT_COLUMNS = ("video_id", "frames", "iou_mean", "iou_std", "pac_mean", "pac_std")
AGGREGATE_ROW_ID = "aggregate"


def export_report(records, path: str | Path) -> Path:
    """Write per-video mean/std rows plus a final aggregate row as CSV.

    The aggregate row averages the per-video columns (frames column sums).
    Values are fixed-point with 6 decimals.
    """
    records = list(records)
    if not records:
        raise ValidationError("no records to report")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for rec in records:
            writer.writerow(_report_row(rec.video_id, len(rec.per_frame), rec))
        agg = [
            _mean([rec.iou_mean for rec in records]),
            _mean([rec.iou_std for rec in records]),
            _mean([rec.pac_mean for rec in records]),
            _mean([rec.pac_std for rec in records]),
        ]
        writer.writerow(
            [AGGREGATE_ROW_ID, sum(len(rec.per_frame) for rec in records)]
            + [f"{v:.6f}" for v in agg]
        )
    return path


def _report_row(video_id: str, frames: int, rec: VideoMetricsRecord) -> list:
    return [
        video_id,
        frames,
        f"{rec.iou_mean:.6f}",
        f"{rec.iou_std:.6f}",
        f"{rec.pac_mean:.6f}",
        f"{rec.pac_std:.6f}",
    ]


def plot_report(records, path: str | Path) -> Path:
    """Bar chart of per-video IoU/PAC means with std error bars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = list(records)
    if not records:
        raise ValidationError("no records to plot")
    ids = [rec.video_id for rec in records]
    x = np.arange(len(ids))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(ids)), 4.0))
    ax.bar(
        x - width / 2,
        [rec.iou_mean for rec in records],
        width,
        yerr=[rec.iou_std for rec in records],
        capsize=3,
        label="IoU",
    )
    ax.bar(
        x + width / 2,
        [rec.pac_mean for rec in records],
        width,
        yerr=[rec.pac_std for rec in records],
        capsize=3,
        label="PAC",
    )
    ax.set_xticks(x)
    ax.set_xticklabels(ids, rotation=45, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Per-video segmentation quality (mean ± std)")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
