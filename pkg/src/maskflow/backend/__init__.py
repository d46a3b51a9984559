from .base import (
    NEGATIVE,
    POSITIVE,
    BackendCapabilities,
    ObjectSeed,
    PromptPoint,
    PropagationResult,
    SegmentationBackend,
    available_backends,
    create_backend,
    register_backend,
    validate_prompts,
)
from .reference import (
    DEFAULT_TOLERANCE,
    DEFAULT_WINDOW_RADIUS,
    ReferenceBackend,
    reference_propagate_step,
    reference_segment,
)
from .adapter import AdapterServer, ExternalBackend, external_adapter_call

register_backend("reference", ReferenceBackend)
register_backend("external", ExternalBackend)

__all__ = [
    "NEGATIVE",
    "POSITIVE",
    "BackendCapabilities",
    "ObjectSeed",
    "PromptPoint",
    "PropagationResult",
    "SegmentationBackend",
    "available_backends",
    "create_backend",
    "register_backend",
    "validate_prompts",
    "DEFAULT_TOLERANCE",
    "DEFAULT_WINDOW_RADIUS",
    "ReferenceBackend",
    "reference_propagate_step",
    "reference_segment",
    "AdapterServer",
    "ExternalBackend",
    "external_adapter_call",
]
