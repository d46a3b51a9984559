from .classes import (
    ClassEntry,
    ClassTable,
    default_class_table,
    load_class_table,
    map_common_classes,
    merge_to_binary,
)
from .split import SplitResult, split_videos
from .synthetic import (
    SceneSpec,
    ShapeSpec,
    generate_synthetic_video,
    parse_scene_spec,
    parse_scene_text,
)
from .video import VideoDataset, load_video_dataset, write_video_dataset

__all__ = [
    "ClassEntry",
    "ClassTable",
    "default_class_table",
    "load_class_table",
    "map_common_classes",
    "merge_to_binary",
    "SplitResult",
    "split_videos",
    "SceneSpec",
    "ShapeSpec",
    "generate_synthetic_video",
    "parse_scene_spec",
    "parse_scene_text",
    "VideoDataset",
    "load_video_dataset",
    "write_video_dataset",
]
