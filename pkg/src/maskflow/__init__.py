"""maskflow: interactive video-segmentation annotation and evaluation toolkit.

Core pieces:

- :mod:`maskflow.dataset` — class tables, binary merging, splits, the
  on-disk video layout, and synthetic moving-shape fixtures with exact GT.
- :mod:`maskflow.metrics` — per-frame IoU / pixel accuracy, per-video
  mean±std aggregation, throughput accounting, CSV/plot reports.
- :mod:`maskflow.backend` — the segmentation backend contract, a
  deterministic flood-fill reference backend, the RLE mask wire format,
  and the socket adapter protocol for external model servers.
- :mod:`maskflow.session` — the annotation engine (objects, point prompts,
  preview masks, propagation jobs, PNG export, persistence).
- :mod:`maskflow.training` — the fine-tuning loop contract (parameter
  partition, gradient accumulation, step decay, warm-up) on a toy
  promptable segmenter with handwritten gradients.
- :mod:`maskflow.service` — HTTP API and command-line front ends.
"""

from . import backend, dataset, metrics, training
from .errors import (
    BackendUnavailableError,
    BusyError,
    MaskflowError,
    MigrationError,
    NotFoundError,
    ParseError,
    ProtocolError,
    StateError,
    TrainingDiverged,
    ValidationError,
)
from .rle import decode_rle, encode_rle
from .session import Session, create_session, load_session, save_session

__version__ = "0.1.0"

__all__ = [
    "backend",
    "dataset",
    "metrics",
    "training",
    "MaskflowError",
    "ValidationError",
    "ParseError",
    "StateError",
    "BusyError",
    "NotFoundError",
    "MigrationError",
    "ProtocolError",
    "BackendUnavailableError",
    "TrainingDiverged",
    "decode_rle",
    "encode_rle",
    "Session",
    "create_session",
    "load_session",
    "save_session",
    "__version__",
]
