"""Annotation engine: the five-verb interactive workflow.

One session annotates one video against one backend. The verbs mirror the
interactive tool: create an object on a frame, click positive/negative
points and watch the preview mask react, visualize all objects, propagate
across the remaining frames, export masks as PNGs, and restart when a
result is not good enough. The engine is UI-agnostic; the HTTP service and
the scripts in demos/ both drive exactly this API.

Sessions are single-writer: mutating calls serialize on a per-session lock,
reads may run concurrently with a propagation job. Every mutation bumps
``revision`` so clients can discard stale views.
"""

import csv
import json
import logging
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend.base import (
    NEGATIVE,
    POSITIVE,
    ObjectSeed,
    PromptPoint,
    PropagationResult,
    SegmentationBackend,
    create_backend,
)
from .dataset.classes import ClassTable, default_class_table
from .dataset.video import VideoDataset, load_video_dataset
from .errors import (
    BusyError,
    MigrationError,
    NotFoundError,
    ParseError,
    StateError,
    ValidationError,
)
from .pngmask import save_mask_png
from .rle import decode_rle, encode_rle, runs_from_jsonable, runs_to_jsonable

logger = logging.getLogger(__name__)

SESSION_FORMAT = "maskflow-session"
SESSION_VERSION = 1

STATUS_DRAFT = "draft"
STATUS_PROPAGATED = "propagated"
STATUS_LOST = "lost"

# Fixed overlay palette indexed by object_id; also served to UI clients.
OBJECT_PALETTE = (
    (230, 57, 70),
    (46, 196, 182),
    (255, 183, 3),
    (106, 76, 219),
    (6, 214, 160),
    (239, 71, 111),
    (17, 138, 178),
    (255, 127, 80),
)


def object_color(object_id: int) -> tuple[int, int, int]:
    return OBJECT_PALETTE[(object_id - 1) % len(OBJECT_PALETTE)]


@dataclass
class AnnotationObject:
    object_id: int
    class_id: int
    class_name: str
    anchor_frame: int
    prompts: list[PromptPoint] = field(default_factory=list)
    preview_masks: dict[int, np.ndarray] = field(default_factory=dict)
    status: str = STATUS_DRAFT
    lost_at: int | None = None

    def prompts_on(self, frame_index: int) -> list[PromptPoint]:
        return [p for p in self.prompts if p.frame_index == frame_index]

    def has_positive_prompt(self, frame_index: int | None = None) -> bool:
        prompts = self.prompts if frame_index is None else self.prompts_on(frame_index)
        return any(p.polarity == POSITIVE for p in prompts)


@dataclass
class Composite:
    image: np.ndarray
    legend: list[tuple[int, str, tuple[int, int, int]]]  # (object_id, class_name, color)


@dataclass
class ExportEntry:
    file: str
    frame: int
    object_id: int | None  # None for merged foreground files
    class_id: int | None


class PropagationJob:
    """Background propagation with observable progress."""

    def __init__(self, session: "Session"):
        self.job_id = uuid.uuid4().hex[:12]
        self.kind = "propagation"
        self.state = "running"
        self.error: str | None = None
        self._done = 0
        self._total = 0
        self._session = session
        self._thread: threading.Thread | None = None

    @property
    def progress(self) -> tuple[int, int]:
        return (self._done, self._total)

    def _on_progress(self, done: int, total: int) -> None:
        self._done, self._total = done, total

    def wait(self, timeout: float | None = None) -> "PropagationJob":
        if self._thread is not None:
            self._thread.join(timeout)
        return self

    def status(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "progress": {"done": self._done, "total": self._total},
            "error": self.error,
        }


class Session:
    """Annotation state for one video; see module docstring for the verbs."""

    def __init__(
        self,
        video: VideoDataset,
        backend: SegmentationBackend,
        backend_name: str = "reference",
        class_table: ClassTable | None = None,
        session_id: str | None = None,
        video_dir: str | None = None,
    ):
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.video = video
        self.backend = backend
        self.backend_name = backend_name
        self.class_table = class_table or default_class_table()
        self.video_dir = video_dir
        self.objects: dict[int, AnnotationObject] = {}
        self.propagation: PropagationResult | None = None
        self.revision = 0
        self._next_object_id = 1
        self._lock = threading.RLock()
        self._job: PropagationJob | None = None

    # ---- helpers ----

    @property
    def width(self) -> int:
        return self.video.resolution[0]

    @property
    def height(self) -> int:
        return self.video.resolution[1]

    def _bump(self) -> int:
        self.revision += 1
        return self.revision

    def _object(self, object_id: int) -> AnnotationObject:
        if object_id not in self.objects:
            raise NotFoundError(f"unknown object {object_id}", code="object_not_found")
        return self.objects[object_id]

    def _check_frame(self, frame_index: int) -> int:
        if not 0 <= frame_index < self.video.frame_count:
            raise ValidationError(
                f"frame {frame_index} out of range [0, {self.video.frame_count})",
                code="frame_out_of_range",
            )
        return frame_index

    def current_job(self) -> PropagationJob | None:
        return self._job

    # ---- step 1: objects and points ----

    def add_object(self, frame_index: int, class_id: int, class_name: str = "") -> int:
        with self._lock:
            self._check_frame(frame_index)
            known = {e.class_id: e.name for e in self.class_table.entries}
            if class_id in known:
                class_name = class_name or known[class_id]
            elif not class_name:
                raise ValidationError(
                    f"class id {class_id} not in the class table; register it with a class_name",
                    code="unknown_class",
                )
            object_id = self._next_object_id
            self._next_object_id += 1
            self.objects[object_id] = AnnotationObject(
                object_id=object_id,
                class_id=class_id,
                class_name=class_name,
                anchor_frame=frame_index,
            )
            self._bump()
            return object_id

    def add_point(
        self, object_id: int, frame_index: int, x: int, y: int, polarity: str
    ) -> np.ndarray:
        """Append a prompt and refresh that frame's preview mask."""
        with self._lock:
            obj = self._object(object_id)
            self._check_frame(frame_index)
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValidationError(
                    f"point ({x},{y}) outside {self.width}x{self.height} frame",
                    code="point_out_of_bounds",
                )
            if polarity == NEGATIVE and not obj.has_positive_prompt(frame_index):
                raise ValidationError(
                    "add a positive point first", code="first_point_negative"
                )
            point = PromptPoint(
                x=x, y=y, polarity=polarity, frame_index=frame_index, object_id=object_id
            )
            obj.prompts.append(point)
            mask = self.backend.predict_frame(
                self.video.frame(frame_index), obj.prompts_on(frame_index)
            )
            obj.preview_masks[frame_index] = mask
            obj.status = STATUS_DRAFT
            obj.lost_at = None
            self._bump()
            return mask

    # ---- step 2: review / correction ----

    def reannotate(self, object_id: int, frame_index: int) -> None:
        """Drop the object's prompts and preview on one frame (idempotent)."""
        with self._lock:
            obj = self._object(object_id)
            obj.prompts = [p for p in obj.prompts if p.frame_index != frame_index]
            obj.preview_masks.pop(frame_index, None)
            obj.status = STATUS_DRAFT
            obj.lost_at = None
            self._bump()

    def visualize(self, frame_index: int) -> Composite:
        """Alpha-blend every object's mask over the frame in its palette color."""
        with self._lock:
            self._check_frame(frame_index)
            image = self.video.frame(frame_index).copy()
            legend = []
            for object_id in sorted(self.objects):
                obj = self.objects[object_id]
                mask = None
                if self.propagation is not None:
                    mask = self.propagation.mask(frame_index, object_id)
                if mask is None:
                    mask = obj.preview_masks.get(frame_index)
                if mask is None or not mask.any():
                    continue
                color = object_color(object_id)
                blended = (image[mask].astype(np.uint16) + np.array(color, dtype=np.uint16)) // 2
                image[mask] = blended.astype(np.uint8)
                legend.append((object_id, obj.class_name, color))
            return Composite(image=image, legend=legend)

    # ---- step 3: propagation ----

    def propagate(self) -> PropagationJob:
        """Start tracking all objects from their anchors; returns the job."""
        with self._lock:
            if self._job is not None and self._job.state == "running":
                raise BusyError("a propagation is already running on this session")
            missing = sorted(
                obj.object_id
                for obj in self.objects.values()
                if not obj.has_positive_prompt(obj.anchor_frame)
            )
            if missing:
                raise ValidationError(
                    f"objects without a positive anchor point: {missing}",
                    code="missing_prompts",
                )
            if not self.objects:
                raise ValidationError("no objects to propagate", code="missing_prompts")
            seeds = {}
            for obj in self.objects.values():
                anchor_mask = obj.preview_masks.get(obj.anchor_frame)
                if anchor_mask is None or not anchor_mask.any():
                    raise ValidationError(
                        f"object {obj.object_id} has an empty anchor preview",
                        code="empty_anchor_mask",
                    )
                seeds[obj.object_id] = ObjectSeed(
                    object_id=obj.object_id,
                    anchor_frame=obj.anchor_frame,
                    anchor_mask=anchor_mask,
                    prompts=tuple(obj.prompts_on(obj.anchor_frame)),
                )
            job = PropagationJob(self)
            self._job = job

        def run():
            try:
                result = self.backend.propagate(self.video, seeds, progress=job._on_progress)
                with self._lock:
                    self.propagation = result
                    for obj in self.objects.values():
                        if obj.object_id in result.lost_at:
                            obj.status = STATUS_LOST
                            obj.lost_at = result.lost_at[obj.object_id]
                        else:
                            obj.status = STATUS_PROPAGATED
                            obj.lost_at = None
                    self._bump()
                    job.state = "done"
            except Exception as exc:  # surfaced via job status, never swallowed silently
                logger.exception("propagation failed on session %s", self.session_id)
                job.error = str(exc)
                job.state = "failed"

        thread = threading.Thread(target=run, daemon=True)
        job._thread = thread
        thread.start()
        return job

    # ---- step 4: export ----

    def export_masks(self, out_dir: str | Path, merged: bool = False) -> list[ExportEntry]:
        """Write per-object mask PNGs (and optionally merged ones) plus a manifest."""
        with self._lock:
            if self.propagation is None:
                raise StateError("run propagation before exporting", code="propagation_missing")
            propagation = self.propagation
            objects = dict(self.objects)
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        video_id = self.video.video_id
        entries: list[ExportEntry] = []
        by_frame: dict[int, list[np.ndarray]] = {}
        for object_id in sorted(objects):
            obj = objects[object_id]
            for frame_index in propagation.frames_for(object_id):
                mask = propagation.mask(frame_index, object_id)
                name = f"{video_id}_f{frame_index:05d}_obj{object_id}_c{obj.class_id}.png"
                save_mask_png(out_dir / name, mask)
                entries.append(ExportEntry(name, frame_index, object_id, obj.class_id))
                by_frame.setdefault(frame_index, []).append(mask)
        if merged:
            for frame_index in sorted(by_frame):
                union = np.zeros((self.height, self.width), dtype=bool)
                for mask in by_frame[frame_index]:
                    union |= mask
                name = f"{video_id}_f{frame_index:05d}_merged.png"
                save_mask_png(out_dir / name, union)
                entries.append(ExportEntry(name, frame_index, None, None))
        with (out_dir / "manifest.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["file", "frame", "object_id", "class_id"])
            for entry in entries:
                writer.writerow(
                    [
                        entry.file,
                        entry.frame,
                        "" if entry.object_id is None else entry.object_id,
                        "" if entry.class_id is None else entry.class_id,
                    ]
                )
        return entries

    # ---- step 5: restart ----

    def restart(self, object_id: int | None = None) -> None:
        """Clear one object (or the whole session) back to a clean slate."""
        with self._lock:
            if object_id is None:
                self.objects.clear()
                self.propagation = None
            else:
                obj = self._object(object_id)
                obj.prompts.clear()
                obj.preview_masks.clear()
                obj.status = STATUS_DRAFT
                obj.lost_at = None
                if self.propagation is not None:
                    self.propagation.masks = {
                        key: mask
                        for key, mask in self.propagation.masks.items()
                        if key[1] != object_id
                    }
                    self.propagation.lost_at.pop(object_id, None)
            self._bump()


# ---------------------------------------------------------------------------
# Construction and persistence
# ---------------------------------------------------------------------------

def create_session(
    video_path: str | Path,
    backend_name: str = "reference",
    backend: SegmentationBackend | None = None,
    class_table: ClassTable | None = None,
) -> Session:
    video = load_video_dataset(video_path)
    if backend is None:
        backend = create_backend(backend_name)
    return Session(
        video=video,
        backend=backend,
        backend_name=backend_name,
        class_table=class_table,
        video_dir=str(video_path),
    )


def _mask_to_json(mask: np.ndarray) -> dict:
    height, width = mask.shape
    return {"width": width, "height": height, "runs": runs_to_jsonable(encode_rle(mask))}


def _mask_from_json(data: dict) -> np.ndarray:
    return decode_rle(runs_from_jsonable(data["runs"]), data["width"], data["height"])


def save_session(session: Session, path: str | Path) -> Path:
    """Persist the full session, masks included, as a versioned JSON document."""
    if session.video_dir is None:
        raise ValidationError("session has no on-disk video; cannot be reloaded later")
    with session._lock:
        doc = {
            "format": SESSION_FORMAT,
            "version": SESSION_VERSION,
            "session_id": session.session_id,
            "video_dir": session.video_dir,
            "backend": session.backend_name,
            "revision": session.revision,
            "next_object_id": session._next_object_id,
            "objects": [
                {
                    "object_id": obj.object_id,
                    "class_id": obj.class_id,
                    "class_name": obj.class_name,
                    "anchor_frame": obj.anchor_frame,
                    "status": obj.status,
                    "lost_at": obj.lost_at,
                    "prompts": [
                        {
                            "x": p.x,
                            "y": p.y,
                            "polarity": p.polarity,
                            "frame_index": p.frame_index,
                        }
                        for p in obj.prompts
                    ],
                    "previews": {
                        str(frame): _mask_to_json(mask)
                        for frame, mask in sorted(obj.preview_masks.items())
                    },
                }
                for obj in (session.objects[oid] for oid in sorted(session.objects))
            ],
            "propagation": None,
        }
        if session.propagation is not None:
            doc["propagation"] = {
                "per_frame_seconds": list(session.propagation.per_frame_seconds),
                "lost_at": {str(k): v for k, v in session.propagation.lost_at.items()},
                "masks": [
                    {"frame": frame, "object_id": object_id, **_mask_to_json(mask)}
                    for (frame, object_id), mask in sorted(session.propagation.masks.items())
                ],
            }
    path = Path(path)
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def load_session(
    path: str | Path,
    backend: SegmentationBackend | None = None,
    class_table: ClassTable | None = None,
) -> Session:
    """Rebuild a session saved with :func:`save_session`."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SESSION_FORMAT:
        raise ParseError(f"{path}: not a session file")
    if doc.get("version") != SESSION_VERSION:
        raise MigrationError(
            f"{path}: session version {doc.get('version')}, expected {SESSION_VERSION}"
        )
    video = load_video_dataset(doc["video_dir"])
    backend_name = doc.get("backend", "reference")
    if backend is None:
        backend = create_backend(backend_name)
    session = Session(
        video=video,
        backend=backend,
        backend_name=backend_name,
        class_table=class_table,
        session_id=doc["session_id"],
        video_dir=doc["video_dir"],
    )
    session.revision = int(doc["revision"])
    session._next_object_id = int(doc["next_object_id"])
    for entry in doc["objects"]:
        obj = AnnotationObject(
            object_id=int(entry["object_id"]),
            class_id=int(entry["class_id"]),
            class_name=entry["class_name"],
            anchor_frame=int(entry["anchor_frame"]),
            status=entry["status"],
            lost_at=entry["lost_at"],
        )
        obj.prompts = [
            PromptPoint(
                x=int(p["x"]),
                y=int(p["y"]),
                polarity=p["polarity"],
                frame_index=int(p["frame_index"]),
                object_id=obj.object_id,
            )
            for p in entry["prompts"]
        ]
        obj.preview_masks = {
            int(frame): _mask_from_json(data) for frame, data in entry["previews"].items()
        }
        session.objects[obj.object_id] = obj
    if doc["propagation"] is not None:
        prop = PropagationResult(masks={})
        prop.per_frame_seconds = list(doc["propagation"]["per_frame_seconds"])
        prop.lost_at = {int(k): int(v) for k, v in doc["propagation"]["lost_at"].items()}
        for item in doc["propagation"]["masks"]:
            prop.masks[(int(item["frame"]), int(item["object_id"]))] = _mask_from_json(item)
        session.propagation = prop
    return session
