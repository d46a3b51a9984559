import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from maskflow.rle import decode_rle, runs_from_jsonable
from maskflow.service import ServiceConfig, create_app

from test_session import SlowBackend


@pytest.fixture
def client(two_shape_dir):
    config = ServiceConfig(dataset_root=str(two_shape_dir.parent))
    app = create_app(config)
    with TestClient(app) as client:
        yield client


@pytest.fixture
def slow_client(two_shape_dir):
    config = ServiceConfig(dataset_root=str(two_shape_dir.parent))
    backend = SlowBackend(delay=0.5)
    app = create_app(config, backend_factory=lambda: backend)
    with TestClient(app) as client:
        client.backend = backend
        yield client


def _open_session(client):
    response = client.post("/sessions", json={"video_id": "twoshape"})
    assert response.status_code == 201
    return response.json()


def _error_code(response):
    return response.json()["error"]["code"]


# ---------------------------------------------------------------------------
# Session lifecycle
# ---------------------------------------------------------------------------

def test_create_session_returns_201_with_state(client):
    payload = _open_session(client)
    assert payload["frame_count"] == 8
    assert payload["revision"] == 0
    assert payload["objects"] == []
    assert payload["resolution"] == [64, 48]


def test_create_session_unknown_video_404(client):
    response = client.post("/sessions", json={"video_id": "nope"})
    assert response.status_code == 404
    assert _error_code(response) == "video_not_found"


def test_get_unknown_session_404(client):
    response = client.get("/sessions/ffff")
    assert response.status_code == 404
    assert _error_code(response) == "session_not_found"


def test_missing_body_fields_is_4xx(client):
    response = client.post("/sessions", json={})
    assert response.status_code == 422
    assert _error_code(response) == "missing_video"


def test_malformed_body_uses_error_envelope(client):
    session = _open_session(client)
    response = client.post(
        f"/sessions/{session['session_id']}/objects", json={"frame": "not-a-number"}
    )
    assert response.status_code == 422
    assert _error_code(response) == "invalid_request"


# ---------------------------------------------------------------------------
# Objects and points
# ---------------------------------------------------------------------------

def test_object_and_point_flow_carries_revisions(client):
    session = _open_session(client)
    sid = session["session_id"]
    response = client.post(f"/sessions/{sid}/objects", json={"frame": 0, "class_id": 2})
    assert response.status_code == 201
    body = response.json()
    object_id = body["object_id"]
    assert body["revision"] == 1
    response = client.post(
        f"/sessions/{sid}/objects/{object_id}/points",
        json={"frame": 0, "x": 16, "y": 24, "polarity": "positive"},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["revision"] == 2
    mask = decode_rle(
        runs_from_jsonable(body["mask"]["runs"]), body["mask"]["width"], body["mask"]["height"]
    )
    assert mask[24, 16]


def test_out_of_bounds_point_is_422_with_stable_code(client):
    session = _open_session(client)
    sid = session["session_id"]
    object_id = client.post(
        f"/sessions/{sid}/objects", json={"frame": 0, "class_id": 2}
    ).json()["object_id"]
    response = client.post(
        f"/sessions/{sid}/objects/{object_id}/points",
        json={"frame": 0, "x": 9999, "y": 0, "polarity": "positive"},
    )
    assert response.status_code == 422
    assert _error_code(response) == "point_out_of_bounds"


def test_first_negative_point_is_422(client):
    session = _open_session(client)
    sid = session["session_id"]
    object_id = client.post(
        f"/sessions/{sid}/objects", json={"frame": 0, "class_id": 2}
    ).json()["object_id"]
    response = client.post(
        f"/sessions/{sid}/objects/{object_id}/points",
        json={"frame": 0, "x": 16, "y": 24, "polarity": "negative"},
    )
    assert response.status_code == 422
    assert _error_code(response) == "first_point_negative"


def test_reannotate_and_restart_endpoints(client):
    session = _open_session(client)
    sid = session["session_id"]
    object_id = client.post(
        f"/sessions/{sid}/objects", json={"frame": 0, "class_id": 2}
    ).json()["object_id"]
    client.post(
        f"/sessions/{sid}/objects/{object_id}/points",
        json={"frame": 0, "x": 16, "y": 24, "polarity": "positive"},
    )
    response = client.post(f"/sessions/{sid}/objects/{object_id}/reannotate", json={"frame": 0})
    assert response.status_code == 200
    state = client.get(f"/sessions/{sid}").json()
    assert state["objects"][0]["prompts"] == []
    response = client.post(f"/sessions/{sid}/restart", json={})
    assert response.status_code == 200
    assert client.get(f"/sessions/{sid}").json()["objects"] == []


# ---------------------------------------------------------------------------
# Frames and composites
# ---------------------------------------------------------------------------

def test_frame_endpoint_serves_png(client, two_shape_video):
    session = _open_session(client)
    response = client.get(f"/sessions/{session['session_id']}/frames/0")
    assert response.status_code == 200
    assert response.headers["content-type"] == "image/png"
    image = np.asarray(Image.open(io.BytesIO(response.content)).convert("RGB"))
    assert np.array_equal(image, two_shape_video.frame(0))


def test_frame_out_of_range_is_422(client):
    session = _open_session(client)
    response = client.get(f"/sessions/{session['session_id']}/frames/999")
    assert response.status_code == 422
    assert _error_code(response) == "frame_out_of_range"


def test_composite_endpoint_serves_png(client):
    session = _open_session(client)
    response = client.get(f"/sessions/{session['session_id']}/composite/0")
    assert response.status_code == 200
    assert response.content[:8] == b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------------------
# Propagation jobs
# ---------------------------------------------------------------------------

def _annotate(client, sid):
    for class_id, (x, y) in ((2, (16, 24)), (9, (44, 12))):
        object_id = client.post(
            f"/sessions/{sid}/objects", json={"frame": 0, "class_id": class_id}
        ).json()["object_id"]
        client.post(
            f"/sessions/{sid}/objects/{object_id}/points",
            json={"frame": 0, "x": x, "y": y, "polarity": "positive"},
        )


def _wait_for_job(client, job_id, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        status = client.get(f"/jobs/{job_id}").json()
        if status["state"] != "running":
            return status
        time.sleep(0.02)
    raise AssertionError("job did not finish in time")


def test_propagate_job_completes_and_masks_served(client):
    session = _open_session(client)
    sid = session["session_id"]
    _annotate(client, sid)
    response = client.post(f"/sessions/{sid}/propagate")
    assert response.status_code == 202
    job_id = response.json()["job_id"]
    status = _wait_for_job(client, job_id)
    assert status["state"] == "done"
    assert status["progress"]["done"] == status["progress"]["total"] == 16
    masks = client.get(f"/sessions/{sid}/masks/7").json()["masks"]
    assert [m["object_id"] for m in masks] == [1, 2]
    assert all(m["runs"] for m in masks)


def test_propagate_without_prompts_is_422(client):
    session = _open_session(client)
    sid = session["session_id"]
    client.post(f"/sessions/{sid}/objects", json={"frame": 0, "class_id": 2})
    response = client.post(f"/sessions/{sid}/propagate")
    assert response.status_code == 422
    assert _error_code(response) == "missing_prompts"


def test_concurrent_propagate_second_gets_409(slow_client):
    session = _open_session(slow_client)
    sid = session["session_id"]
    _annotate(slow_client, sid)
    first = slow_client.post(f"/sessions/{sid}/propagate")
    assert first.status_code == 202
    slow_client.backend.started.wait(timeout=5)
    second = slow_client.post(f"/sessions/{sid}/propagate")
    assert second.status_code == 409
    assert _error_code(second) == "busy"
    _wait_for_job(slow_client, first.json()["job_id"])


def test_unknown_job_404(client):
    response = client.get("/jobs/none")
    assert response.status_code == 404


# ---------------------------------------------------------------------------
# Export and persistence across restarts
# ---------------------------------------------------------------------------

def test_export_endpoint_counts(client, tmp_path):
    session = _open_session(client)
    sid = session["session_id"]
    _annotate(client, sid)
    job_id = client.post(f"/sessions/{sid}/propagate").json()["job_id"]
    _wait_for_job(client, job_id)
    response = client.post(
        f"/sessions/{sid}/export", json={"out_dir": str(tmp_path / "out"), "merged": True}
    )
    assert response.status_code == 200
    body = response.json()
    assert body["count"] == 2 * 8 + 8
    merged_rows = [f for f in body["files"] if f["object_id"] is None]
    assert len(merged_rows) == 8


def test_export_before_propagation_is_409(client, tmp_path):
    session = _open_session(client)
    sid = session["session_id"]
    _annotate(client, sid)
    response = client.post(f"/sessions/{sid}/export", json={"out_dir": str(tmp_path / "x")})
    assert response.status_code == 409
    assert _error_code(response) == "propagation_missing"


def test_external_backend_via_service_config(two_shape_dir, tmp_path):
    from maskflow.backend import AdapterServer, ReferenceBackend

    socket_path = str(tmp_path / "adapter.sock")
    with AdapterServer(socket_path, ReferenceBackend()):
        config = ServiceConfig(
            dataset_root=str(two_shape_dir.parent),
            backend="external",
            adapter_socket=socket_path,
        )
        with TestClient(create_app(config)) as client:
            session = _open_session(client)
            sid = session["session_id"]
            assert session["backend"] == "external"
            _annotate(client, sid)
            job_id = client.post(f"/sessions/{sid}/propagate").json()["job_id"]
            status = _wait_for_job(client, job_id)
            assert status["state"] == "done"
            masks = client.get(f"/sessions/{sid}/masks/7").json()["masks"]
            assert len(masks) == 2


def test_external_backend_without_socket_is_422(two_shape_dir):
    config = ServiceConfig(dataset_root=str(two_shape_dir.parent), backend="external")
    with TestClient(create_app(config)) as client:
        response = client.post("/sessions", json={"video_id": "twoshape"})
        assert response.status_code == 422
        assert _error_code(response) == "adapter_not_configured"


def test_session_survives_service_restart_via_save_load(two_shape_dir, tmp_path):
    config = ServiceConfig(dataset_root=str(two_shape_dir.parent))
    saved = tmp_path / "session.json"

    with TestClient(create_app(config)) as client:
        session = _open_session(client)
        sid = session["session_id"]
        _annotate(client, sid)
        job_id = client.post(f"/sessions/{sid}/propagate").json()["job_id"]
        _wait_for_job(client, job_id)
        revision = client.get(f"/sessions/{sid}").json()["revision"]
        assert client.post(f"/sessions/{sid}/save", json={"path": str(saved)}).status_code == 200

    # a fresh service instance = process restart; session store starts empty
    with TestClient(create_app(config)) as client:
        assert client.get(f"/sessions/{sid}").status_code == 404
        response = client.post("/sessions/load", json={"path": str(saved)})
        assert response.status_code == 201
        state = response.json()
        assert state["session_id"] == sid
        assert state["revision"] == revision
        assert state["propagated"] is True
        out = client.post(
            f"/sessions/{sid}/export", json={"out_dir": str(tmp_path / "after")}
        ).json()
        assert out["count"] == 16
