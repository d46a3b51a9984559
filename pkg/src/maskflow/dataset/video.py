"""Video dataset container and on-disk layout.

Layout convention, one directory per video::

    <root>/<video_id>/frames/<NNNNN>.png      or  <root>/<video_id>/video.<ext>
    <root>/<video_id>/labels/<NNNNN>.png      8-bit PNG, pixel value = class id
    <root>/<video_id>/manifest                newline-separated annotated frame indices
    <root>/<video_id>/meta.json               optional: fps, resolution

Frames are normalized to contiguous indices 0..N-1 whether they come from an
image sequence or a video container (decoded via OpenCV when present).
Ground truth is sparse: only the frames listed in the manifest carry labels.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ParseError, ValidationError

DEFAULT_FPS = 25.0
FRAME_NAME = "{:05d}.png"


@dataclass
class VideoDataset:
    video_id: str
    fps: float
    resolution: tuple[int, int]  # (width, height)
    frames: list[np.ndarray] | None = None
    frame_paths: list[Path] | None = None
    ground_truth: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.frames is None and self.frame_paths is None:
            raise ValidationError(f"video {self.video_id}: no frame source")
        width, height = self.resolution
        for idx, gt in self.ground_truth.items():
            if gt.shape != (height, width):
                raise ValidationError(
                    f"video {self.video_id}: label map for frame {idx} has shape "
                    f"{gt.shape}, expected {(height, width)}"
                )

    @property
    def frame_count(self) -> int:
        source = self.frames if self.frames is not None else self.frame_paths
        return len(source)

    def frame(self, index: int) -> np.ndarray:
        """Return frame ``index`` as an (H, W, 3) uint8 array."""
        if not 0 <= index < self.frame_count:
            raise ValidationError(
                f"frame {index} out of range [0, {self.frame_count})"
            )
        if self.frames is not None:
            return self.frames[index]
        return _read_frame(self.frame_paths[index])

    def annotated_frames(self) -> list[int]:
        return sorted(self.ground_truth)


def _read_frame(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _read_labelmap(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise ParseError(f"{path}: label maps must be single-channel, got shape {arr.shape}")
    return arr.astype(np.int32)


def _decode_container(path: Path) -> list[np.ndarray]:
    try:
        import cv2
    except ImportError as exc:  # pragma: no cover - depends on install extras
        raise ValidationError(
            f"{path}: decoding video containers requires opencv-python-headless"
        ) from exc
    capture = cv2.VideoCapture(str(path))
    frames = []
    while True:
        ok, frame = capture.read()
        if not ok:
            break
        frames.append(frame[:, :, ::-1].copy())  # BGR -> RGB
    capture.release()
    if not frames:
        raise ParseError(f"{path}: no frames decoded")
    return frames


def load_video_dataset(video_dir: str | Path) -> VideoDataset:
    """Load one video directory into a :class:`VideoDataset`."""
    video_dir = Path(video_dir)
    if not video_dir.is_dir():
        raise FileNotFoundError(f"video directory not found: {video_dir}")
    video_id = video_dir.name

    meta = {}
    meta_path = video_dir / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))

    frames = None
    frame_paths = None
    frames_dir = video_dir / "frames"
    containers = sorted(video_dir.glob("video.*"))
    if frames_dir.is_dir():
        frame_paths = sorted(frames_dir.glob("*.png"))
        if not frame_paths:
            raise ParseError(f"{frames_dir}: no frame PNGs")
        expected = [frames_dir / FRAME_NAME.format(i) for i in range(len(frame_paths))]
        if frame_paths != expected:
            raise ParseError(
                f"{frames_dir}: frame files must be contiguous {FRAME_NAME.format(0)}.."
            )
    elif containers:
        frames = _decode_container(containers[0])
    else:
        raise FileNotFoundError(f"{video_dir}: neither frames/ nor video.* found")

    if "resolution" in meta:
        resolution = (int(meta["resolution"][0]), int(meta["resolution"][1]))
    else:
        probe = frames[0] if frames is not None else _read_frame(frame_paths[0])
        resolution = (probe.shape[1], probe.shape[0])
    fps = float(meta.get("fps", DEFAULT_FPS))

    ground_truth = {}
    manifest_path = video_dir / "manifest"
    if manifest_path.exists():
        labels_dir = video_dir / "labels"
        for lineno, line in enumerate(
            manifest_path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            line = line.strip()
            if not line:
                continue
            try:
                idx = int(line)
            except ValueError:
                raise ParseError(f"{manifest_path}:{lineno}: bad frame index {line!r}")
            label_path = labels_dir / FRAME_NAME.format(idx)
            if not label_path.exists():
                raise ParseError(f"{manifest_path}:{lineno}: missing label {label_path}")
            ground_truth[idx] = _read_labelmap(label_path)

    return VideoDataset(
        video_id=video_id,
        fps=fps,
        resolution=resolution,
        frames=frames,
        frame_paths=frame_paths,
        ground_truth=ground_truth,
    )


def write_video_dataset(dataset: VideoDataset, root: str | Path) -> Path:
    """Write a dataset to ``<root>/<video_id>/`` in the standard layout."""
    video_dir = Path(root) / dataset.video_id
    frames_dir = video_dir / "frames"
    labels_dir = video_dir / "labels"
    frames_dir.mkdir(parents=True, exist_ok=True)
    for i in range(dataset.frame_count):
        Image.fromarray(dataset.frame(i)).save(frames_dir / FRAME_NAME.format(i))
    annotated = dataset.annotated_frames()
    if annotated:
        labels_dir.mkdir(parents=True, exist_ok=True)
        for idx in annotated:
            labels = dataset.ground_truth[idx]
            if labels.max(initial=0) > 255:
                raise ValidationError(
                    f"video {dataset.video_id}: class ids above 255 do not fit 8-bit PNGs"
                )
            Image.fromarray(labels.astype(np.uint8)).save(labels_dir / FRAME_NAME.format(idx))
    (video_dir / "manifest").write_text(
        "".join(f"{idx}\n" for idx in annotated), encoding="utf-8"
    )
    meta = {"fps": dataset.fps, "resolution": list(dataset.resolution)}
    (video_dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return video_dir
