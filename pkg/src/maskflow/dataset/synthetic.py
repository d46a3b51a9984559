"""Synthetic moving-shape videos with exact ground truth.

Desk-scale stand-in for real surgical footage: solid-colored ellipses and
rectangles drift over a uniform background, and because we rasterize the
label map and the frame from the same predicate, the ground truth is exact
by construction. Scene files are plain text::

    # comment
    video_id: drift
    frames: 30
    width: 96
    height: 64
    fps: 25
    background: 12,12,12
    shape: ellipse class=2 color=220,60,60 center=20,32 axes=9,6 velocity=2,0
    shape: rect class=7 color=60,200,80 origin=58,10 size=14,12 velocity=-1,1

``center``/``origin`` are (x, y) pixels at frame 0, ``velocity`` is pixels per
frame, ``axes`` are ellipse semi-axes and ``size`` is rectangle width,height.
Later shapes paint over earlier ones; every fill color must differ from the
background and from every other shape so masks stay unambiguous.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError, ValidationError
from .video import VideoDataset

_SHAPE_KINDS = ("ellipse", "rect")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    class_id: int
    color: tuple[int, int, int]
    position: tuple[float, float]  # ellipse center or rect top-left (x, y)
    size: tuple[float, float]  # ellipse semi-axes (rx, ry) or rect (w, h)
    velocity: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class SceneSpec:
    video_id: str
    frames: int
    width: int
    height: int
    fps: float = 25.0
    background: tuple[int, int, int] = (0, 0, 0)
    shapes: tuple[ShapeSpec, ...] = ()


def _validate_scene(scene: SceneSpec) -> None:
    if scene.frames < 1:
        raise ValidationError(f"scene needs at least one frame, got {scene.frames}")
    if scene.width < 1 or scene.height < 1:
        raise ValidationError(f"invalid scene size {scene.width}x{scene.height}")
    seen_colors = {scene.background: "background"}
    for shape in scene.shapes:
        if shape.kind not in _SHAPE_KINDS:
            raise ValidationError(f"unknown shape kind {shape.kind!r}")
        if shape.class_id < 1:
            raise ValidationError(f"shape class_id must be >= 1, got {shape.class_id}")
        if any(not 0 <= c <= 255 for c in shape.color):
            raise ValidationError(f"color {shape.color} out of 0..255")
        if shape.color in seen_colors:
            raise ValidationError(
                f"fill color {shape.color} reused by {seen_colors[shape.color]}; "
                "shape colors must be unique to keep masks unambiguous"
            )
        seen_colors[shape.color] = f"shape class {shape.class_id}"


def _shape_mask(shape: ShapeSpec, frame_index: int, width: int, height: int) -> np.ndarray:
    px = shape.position[0] + frame_index * shape.velocity[0]
    py = shape.position[1] + frame_index * shape.velocity[1]
    xs = np.arange(width)[None, :]
    ys = np.arange(height)[:, None]
    if shape.kind == "ellipse":
        cx, cy = round(px), round(py)
        rx, ry = shape.size
        return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    x0, y0 = round(px), round(py)
    w, h = shape.size
    return (xs >= x0) & (xs < x0 + w) & (ys >= y0) & (ys < y0 + h)


def generate_synthetic_video(scene: SceneSpec) -> VideoDataset:
    """Render a scene into frames plus exact per-frame label maps."""
    _validate_scene(scene)
    frames = []
    ground_truth = {}
    background = np.array(scene.background, dtype=np.uint8)
    for t in range(scene.frames):
        frame = np.empty((scene.height, scene.width, 3), dtype=np.uint8)
        frame[:] = background
        labels = np.zeros((scene.height, scene.width), dtype=np.int32)
        for shape in scene.shapes:
            mask = _shape_mask(shape, t, scene.width, scene.height)
            frame[mask] = shape.color
            labels[mask] = shape.class_id
        frames.append(frame)
        ground_truth[t] = labels
    return VideoDataset(
        video_id=scene.video_id,
        fps=scene.fps,
        resolution=(scene.width, scene.height),
        frames=frames,
        ground_truth=ground_truth,
    )


# ---------------------------------------------------------------------------
# Scene file parsing
# ---------------------------------------------------------------------------

def _parse_pair(text: str, where: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ParseError(f"{where}: expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_color(text: str, where: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ParseError(f"{where}: expected 'r,g,b', got {text!r}")
    return tuple(int(p) for p in parts)


def _parse_shape(rest: str, where: str) -> ShapeSpec:
    tokens = rest.split()
    if not tokens:
        raise ParseError(f"{where}: empty shape line")
    kind = tokens[0]
    attrs = {}
    for token in tokens[1:]:
        if "=" not in token:
            raise ParseError(f"{where}: expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        attrs[key] = value
    try:
        class_id = int(attrs.pop("class"))
        color = _parse_color(attrs.pop("color"), where)
        if kind == "ellipse":
            position = _parse_pair(attrs.pop("center"), where)
            size = _parse_pair(attrs.pop("axes"), where)
        else:
            position = _parse_pair(attrs.pop("origin"), where)
            size = _parse_pair(attrs.pop("size"), where)
        velocity = (0.0, 0.0)
        if "velocity" in attrs:
            velocity = _parse_pair(attrs.pop("velocity"), where)
    except KeyError as exc:
        raise ParseError(f"{where}: shape missing attribute {exc.args[0]}")
    if attrs:
        raise ParseError(f"{where}: unknown shape attributes {sorted(attrs)}")
    return ShapeSpec(kind, class_id, color, position, size, velocity)


def parse_scene_spec(path: str | Path) -> SceneSpec:
    """Parse a scene file."""
    return parse_scene_text(Path(path).read_text(encoding="utf-8"), name=str(path))


def parse_scene_text(text: str, name: str = "<scene>") -> SceneSpec:
    fields: dict[str, str] = {}
    shapes: list[ShapeSpec] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if ":" not in stripped:
            raise ParseError(f"{name}:{lineno}: expected 'key: value', got {line!r}")
        key, value = (part.strip() for part in stripped.split(":", 1))
        if key == "shape":
            shapes.append(_parse_shape(value, f"{name}:{lineno}"))
        elif key in fields:
            raise ParseError(f"{name}:{lineno}: duplicate key {key!r}")
        else:
            fields[key] = value

    try:
        scene = SceneSpec(
            video_id=fields.pop("video_id"),
            frames=int(fields.pop("frames")),
            width=int(fields.pop("width")),
            height=int(fields.pop("height")),
            fps=float(fields.pop("fps", "25")),
            background=_parse_color(fields.pop("background", "0,0,0"), name),
            shapes=tuple(shapes),
        )
    except KeyError as exc:
        raise ParseError(f"{name}: missing required key {exc.args[0]!r}")
    except ValueError as exc:
        raise ParseError(f"{name}: {exc}")
    if fields:
        raise ParseError(f"{name}: unknown keys {sorted(fields)}")
    _validate_scene(scene)
    return scene
