"""HTTP facade over the session engine.

All mutations delegate to :mod:`maskflow.session`; every response carries
the session revision so clients can refresh optimistically. Engine errors
surface as 4xx with stable machine-readable codes; nothing user-triggerable
maps to a 5xx.
"""

import io
import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ..backend.base import create_backend
from ..errors import (
    BackendUnavailableError,
    BusyError,
    MaskflowError,
    MigrationError,
    NotFoundError,
    ParseError,
    ProtocolError,
    StateError,
    ValidationError,
)
from ..rle import encode_rle, runs_to_jsonable
from ..session import PropagationJob, Session, create_session, load_session, object_color, save_session
from .config import ServiceConfig

logger = logging.getLogger(__name__)

_STATUS_BY_ERROR = (
    (BusyError, 409),
    (StateError, 409),
    (NotFoundError, 404),
    (ValidationError, 422),
    (MigrationError, 400),
    (ParseError, 400),
    (BackendUnavailableError, 503),
    (ProtocolError, 502),
)


def _http_status(exc: MaskflowError) -> int:
    for kind, status in _STATUS_BY_ERROR:
        if isinstance(exc, kind):
            return status
    return 500


class CreateSessionBody(BaseModel):
    video_id: str | None = None
    path: str | None = None
    backend: str | None = None


class AddObjectBody(BaseModel):
    frame: int
    class_id: int
    class_name: str = ""


class AddPointBody(BaseModel):
    frame: int
    x: int
    y: int
    polarity: str


class ReannotateBody(BaseModel):
    frame: int


class RestartBody(BaseModel):
    object_id: int | None = None


class ExportBody(BaseModel):
    out_dir: str | None = None
    merged: bool = False


class SavePathBody(BaseModel):
    path: str


def _mask_payload(mask: np.ndarray) -> dict:
    height, width = mask.shape
    return {"width": width, "height": height, "runs": runs_to_jsonable(encode_rle(mask))}


def _png_response(image: np.ndarray) -> Response:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return Response(content=buf.getvalue(), media_type="image/png")


def _session_payload(session: Session) -> dict:
    job = session.current_job()
    return {
        "session_id": session.session_id,
        "video_id": session.video.video_id,
        "frame_count": session.video.frame_count,
        "resolution": list(session.video.resolution),
        "fps": session.video.fps,
        "backend": session.backend_name,
        "revision": session.revision,
        "propagated": session.propagation is not None,
        "objects": [
            {
                "object_id": obj.object_id,
                "class_id": obj.class_id,
                "class_name": obj.class_name,
                "anchor_frame": obj.anchor_frame,
                "status": obj.status,
                "lost_at": obj.lost_at,
                "color": list(object_color(obj.object_id)),
                "prompts": [
                    {"x": p.x, "y": p.y, "polarity": p.polarity, "frame": p.frame_index}
                    for p in obj.prompts
                ],
            }
            for obj in (session.objects[oid] for oid in sorted(session.objects))
        ],
        "job": job.status() if job is not None else None,
    }


def create_app(config: ServiceConfig | None = None, backend_factory=None) -> FastAPI:
    """Build the API app; ``backend_factory`` overrides backend creation in tests."""
    config = config or ServiceConfig()
    app = FastAPI(title="maskflow annotation service")
    # The web client is typically served from a dev server on another port.
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.config = config
    app.state.sessions = {}
    app.state.jobs = {}

    def make_backend(name: str | None, video_path: Path | None = None):
        if backend_factory is not None:
            return backend_factory()
        name = name or config.backend
        if name == "external":
            if not config.adapter_socket:
                raise ValidationError(
                    "external backend requires adapter_socket in the config",
                    code="adapter_not_configured",
                )
            if video_path is None:
                raise ValidationError(
                    "external backend needs a video path at session creation",
                    code="adapter_not_configured",
                )
            return create_backend(
                name, socket_path=config.adapter_socket, dataset_path=str(video_path)
            )
        return create_backend(name)

    def get_session(session_id: str) -> Session:
        session = app.state.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id}", code="session_not_found")
        return session

    @app.exception_handler(MaskflowError)
    async def engine_error_handler(_request: Request, exc: MaskflowError):
        return JSONResponse(
            status_code=_http_status(exc),
            content={"error": {"code": exc.code, "message": str(exc)}},
        )

    @app.exception_handler(RequestValidationError)
    async def body_error_handler(_request: Request, exc: RequestValidationError):
        # keep malformed-body failures in the same error envelope as engine ones
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "invalid_request", "message": str(exc.errors())}},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(app.state.sessions)}

    @app.post("/sessions", status_code=201)
    def post_session(body: CreateSessionBody):
        if body.path:
            video_path = Path(body.path)
        elif body.video_id:
            video_path = Path(config.dataset_root) / body.video_id
        else:
            raise ValidationError("provide video_id or path", code="missing_video")
        if not video_path.exists():
            raise NotFoundError(f"video not found: {video_path}", code="video_not_found")
        backend_name = body.backend or config.backend
        session = create_session(
            video_path, backend_name, backend=make_backend(body.backend, video_path)
        )
        app.state.sessions[session.session_id] = session
        return _session_payload(session)

    @app.get("/sessions/{session_id}")
    def get_session_state(session_id: str):
        return _session_payload(get_session(session_id))

    @app.post("/sessions/{session_id}/objects", status_code=201)
    def post_object(session_id: str, body: AddObjectBody):
        session = get_session(session_id)
        object_id = session.add_object(body.frame, body.class_id, body.class_name)
        return {
            "object_id": object_id,
            "color": list(object_color(object_id)),
            "revision": session.revision,
        }

    @app.post("/sessions/{session_id}/objects/{object_id}/points")
    def post_point(session_id: str, object_id: int, body: AddPointBody):
        session = get_session(session_id)
        mask = session.add_point(object_id, body.frame, body.x, body.y, body.polarity)
        return {"revision": session.revision, "mask": _mask_payload(mask)}

    @app.post("/sessions/{session_id}/objects/{object_id}/reannotate")
    def post_reannotate(session_id: str, object_id: int, body: ReannotateBody):
        session = get_session(session_id)
        session.reannotate(object_id, body.frame)
        return {"revision": session.revision}

    @app.post("/sessions/{session_id}/restart")
    def post_restart(session_id: str, body: RestartBody):
        session = get_session(session_id)
        session.restart(body.object_id)
        return {"revision": session.revision}

    @app.post("/sessions/{session_id}/propagate", status_code=202)
    def post_propagate(session_id: str):
        session = get_session(session_id)
        job = session.propagate()
        app.state.jobs[job.job_id] = job
        return {"job_id": job.job_id, "revision": session.revision}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job: PropagationJob | None = app.state.jobs.get(job_id)
        if job is None:
            raise NotFoundError(f"unknown job {job_id}", code="job_not_found")
        return job.status()

    @app.get("/sessions/{session_id}/frames/{frame_index}")
    def get_frame(session_id: str, frame_index: int):
        session = get_session(session_id)
        session._check_frame(frame_index)
        return _png_response(session.video.frame(frame_index))

    @app.get("/sessions/{session_id}/composite/{frame_index}")
    def get_composite(session_id: str, frame_index: int):
        session = get_session(session_id)
        return _png_response(session.visualize(frame_index).image)

    @app.get("/sessions/{session_id}/masks/{frame_index}")
    def get_masks(session_id: str, frame_index: int):
        session = get_session(session_id)
        session._check_frame(frame_index)
        masks = []
        for object_id in sorted(session.objects):
            obj = session.objects[object_id]
            mask = None
            if session.propagation is not None:
                mask = session.propagation.mask(frame_index, object_id)
            if mask is None:
                mask = obj.preview_masks.get(frame_index)
            if mask is None:
                continue
            masks.append({"object_id": object_id, **_mask_payload(mask)})
        return {"revision": session.revision, "frame": frame_index, "masks": masks}

    @app.post("/sessions/{session_id}/export")
    def post_export(session_id: str, body: ExportBody):
        session = get_session(session_id)
        out_dir = Path(body.out_dir) if body.out_dir else (
            Path(config.dataset_root) / "exports" / session.session_id
        )
        entries = session.export_masks(out_dir, merged=body.merged)
        return {
            "dir": str(out_dir),
            "count": len(entries),
            "files": [
                {
                    "file": e.file,
                    "frame": e.frame,
                    "object_id": e.object_id,
                    "class_id": e.class_id,
                }
                for e in entries
            ],
        }

    @app.post("/sessions/{session_id}/save")
    def post_save(session_id: str, body: SavePathBody):
        session = get_session(session_id)
        save_session(session, body.path)
        return {"path": body.path, "revision": session.revision}

    @app.post("/sessions/load", status_code=201)
    def post_load(body: SavePathBody):
        from ..backend import ReferenceBackend

        session = load_session(body.path, backend=ReferenceBackend())
        if backend_factory is not None or session.backend_name != "reference":
            session.backend = make_backend(session.backend_name, Path(session.video_dir))
        app.state.sessions[session.session_id] = session
        return _session_payload(session)

    return app
