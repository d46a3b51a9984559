"""Wire protocol for attaching an external segmentation backend.

Transport: a local stream socket carrying length-prefixed binary messages,
one in-flight request per connection. Every message is a 4-byte big-endian
payload length followed by the payload. All integers are big-endian.

Request payload::

    version:1  opcode:1  body...

    opcode 0 (handshake):      path_len:2  dataset_path:utf-8
    opcode 1 (predict_frame):  frame_index:4  point_count:2  points...
    opcode 2 (propagate_init): same body as predict_frame (anchor prompts)
    opcode 3 (propagate_step): same body; frame_index is the frame to
                               produce and a single reference point carries
                               the object_id being advanced

    point: x:4  y:4  polarity:1 (1=positive, 0=negative)  object_id:4

Response payload::

    status:1 (0=ok, 1=validation, 2=protocol, 3=internal)
    ok:     width:4  height:4  run_count:4  then per run start:4 length:4
            (row-major runs of TRUE pixels: sorted, non-overlapping,
            non-adjacent)
    error:  message_len:2  message:utf-8

Frames are referenced by index against the dataset path exchanged at
handshake; masks travel as RLE so megapixel rasters never cross the wire
as raw booleans.
"""

import logging
import socket
import socketserver
import struct
import threading
import time
from pathlib import Path

import numpy as np

from ..dataset.video import VideoDataset, load_video_dataset
from ..errors import (
    BackendUnavailableError,
    MaskflowError,
    ProtocolError,
    ValidationError,
)
from ..rle import decode_rle, encode_rle
from .base import NEGATIVE, POSITIVE, BackendCapabilities, ObjectSeed, PromptPoint, PropagationResult
from .reference import ReferenceBackend, reference_propagate_step

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

OP_HANDSHAKE = 0
OP_PREDICT_FRAME = 1
OP_PROPAGATE_INIT = 2
OP_PROPAGATE_STEP = 3

STATUS_OK = 0
STATUS_VALIDATION = 1
STATUS_PROTOCOL = 2
STATUS_INTERNAL = 3

_U32 = struct.Struct(">I")
_U16 = struct.Struct(">H")


# ---------------------------------------------------------------------------
# Message encoding / decoding
# ---------------------------------------------------------------------------

def encode_points_request(opcode: int, frame_index: int, prompts) -> bytes:
    parts = [bytes([PROTOCOL_VERSION, opcode]), _U32.pack(frame_index), _U16.pack(len(prompts))]
    for p in prompts:
        polarity = 1 if p.polarity == POSITIVE else 0
        parts.append(_U32.pack(p.x) + _U32.pack(p.y) + bytes([polarity]) + _U32.pack(p.object_id))
    return b"".join(parts)


def encode_handshake(dataset_path: str) -> bytes:
    raw = dataset_path.encode("utf-8")
    return bytes([PROTOCOL_VERSION, OP_HANDSHAKE]) + _U16.pack(len(raw)) + raw


def decode_request(payload: bytes) -> tuple[int, dict]:
    """Parse a request payload into (opcode, fields). Raises ProtocolError."""
    try:
        version, opcode = payload[0], payload[1]
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        body = payload[2:]
        if opcode == OP_HANDSHAKE:
            (path_len,) = _U16.unpack_from(body, 0)
            path = body[2 : 2 + path_len].decode("utf-8")
            return opcode, {"dataset_path": path}
        (frame_index,) = _U32.unpack_from(body, 0)
        (count,) = _U16.unpack_from(body, 4)
        offset = 6
        points = []
        for _ in range(count):
            (x,) = _U32.unpack_from(body, offset)
            (y,) = _U32.unpack_from(body, offset + 4)
            polarity = body[offset + 8]
            (object_id,) = _U32.unpack_from(body, offset + 9)
            points.append(
                PromptPoint(
                    x=x,
                    y=y,
                    polarity=POSITIVE if polarity else NEGATIVE,
                    frame_index=frame_index,
                    object_id=object_id,
                )
            )
            offset += 13
        if offset != len(body):
            raise ProtocolError(f"{len(body) - offset} trailing bytes in request body")
        return opcode, {"frame_index": frame_index, "points": points}
    except (IndexError, struct.error) as exc:
        raise ProtocolError(f"truncated request: {exc}") from exc


def encode_mask_response(mask: np.ndarray) -> bytes:
    height, width = mask.shape
    runs = encode_rle(mask)
    parts = [bytes([STATUS_OK]), _U32.pack(width), _U32.pack(height), _U32.pack(len(runs))]
    for start, length in runs:
        parts.append(_U32.pack(start) + _U32.pack(length))
    return b"".join(parts)


def encode_error_response(status: int, message: str) -> bytes:
    raw = message.encode("utf-8")
    return bytes([status]) + _U16.pack(len(raw)) + raw


# Status-only acknowledgement (e.g. for handshakes): a 0x0 mask.
ACK_RESPONSE = bytes([STATUS_OK]) + _U32.pack(0) + _U32.pack(0) + _U32.pack(0)


def decode_response(payload: bytes) -> np.ndarray:
    """Decode a response into a mask, raising on error statuses."""
    if not payload:
        raise ProtocolError("empty response payload")
    status = payload[0]
    if status != STATUS_OK:
        try:
            (msg_len,) = _U16.unpack_from(payload, 1)
            message = payload[3 : 3 + msg_len].decode("utf-8")
        except (struct.error, UnicodeDecodeError):
            message = payload[1:].hex()
        if status == STATUS_VALIDATION:
            raise ValidationError(message)
        raise ProtocolError(f"adapter error (status {status}): {message}")
    try:
        (width,) = _U32.unpack_from(payload, 1)
        (height,) = _U32.unpack_from(payload, 5)
        (run_count,) = _U32.unpack_from(payload, 9)
        runs = []
        offset = 13
        for _ in range(run_count):
            (start,) = _U32.unpack_from(payload, offset)
            (length,) = _U32.unpack_from(payload, offset + 4)
            runs.append((start, length))
            offset += 8
        if offset != len(payload):
            raise ProtocolError(f"{len(payload) - offset} trailing bytes in response")
        if width == 0 and height == 0 and run_count == 0:
            return np.zeros((0, 0), dtype=bool)
        return decode_rle(runs, width, height)
    except (struct.error, ValidationError) as exc:
        logger.error("malformed adapter response: %s payload=%s", exc, payload.hex())
        raise ProtocolError(f"malformed mask response: {exc}") from exc


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------

def write_message(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(_U32.pack(len(payload)) + payload)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("connection closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> bytes:
    (length,) = _U32.unpack(_recv_exact(sock, 4))
    return _recv_exact(sock, length)


def external_adapter_call(sock: socket.socket, request: bytes) -> bytes:
    """One framed round trip; maps socket failures to backend-unavailable."""
    try:
        write_message(sock, request)
        return read_message(sock)
    except socket.timeout as exc:
        raise BackendUnavailableError(f"adapter timed out: {exc}") from exc
    except (ConnectionError, OSError) as exc:
        raise BackendUnavailableError(f"adapter connection failed: {exc}") from exc


# ---------------------------------------------------------------------------
# Client backend
# ---------------------------------------------------------------------------

class ExternalBackend:
    """Backend that forwards predictions to an adapter over a local socket."""

    def __init__(self, socket_path: str, dataset_path: str, timeout: float = 30.0, name: str = "external"):
        self.socket_path = socket_path
        self.dataset_path = str(dataset_path)
        self.timeout = timeout
        self.name = name
        self._sock: socket.socket | None = None

    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(name=self.name, supports_video=True, max_objects=None)

    def _connection(self) -> socket.socket:
        if self._sock is None:
            sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            sock.settimeout(self.timeout)
            try:
                sock.connect(self.socket_path)
            except OSError as exc:
                raise BackendUnavailableError(
                    f"cannot reach adapter at {self.socket_path}: {exc}"
                ) from exc
            self._sock = sock
            decode_response(external_adapter_call(sock, encode_handshake(self.dataset_path)))
        return self._sock

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def _call(self, opcode: int, frame_index: int, prompts) -> np.ndarray:
        request = encode_points_request(opcode, frame_index, list(prompts))
        return decode_response(external_adapter_call(self._connection(), request))

    def predict_frame(self, frame: np.ndarray, prompts) -> np.ndarray:
        prompts = list(prompts)
        if not prompts:
            raise ValidationError("at least one positive point is required", code="no_positive_points")
        mask = self._call(OP_PREDICT_FRAME, prompts[0].frame_index, prompts)
        if mask.shape != frame.shape[:2]:
            raise ProtocolError(
                f"adapter mask shape {mask.shape} does not match frame {frame.shape[:2]}"
            )
        return mask

    def propagate(self, video: VideoDataset, seeds: dict[int, ObjectSeed], progress=None) -> PropagationResult:
        result = PropagationResult(masks={})
        last = video.frame_count - 1
        total = sum(last - seed.anchor_frame + 1 for seed in seeds.values())
        done = 0
        expected_shape = (video.resolution[1], video.resolution[0])
        for object_id, seed in sorted(seeds.items()):
            anchor_ref = next(p for p in seed.prompts if p.polarity == POSITIVE)
            mask = self._call(OP_PROPAGATE_INIT, seed.anchor_frame, seed.prompts)
            if mask.shape != expected_shape:
                raise ProtocolError(f"adapter mask shape {mask.shape} != {expected_shape}")
            result.masks[(seed.anchor_frame, object_id)] = mask
            done += 1
            if progress:
                progress(done, total)
            lost = False
            for frame_index in range(seed.anchor_frame + 1, last + 1):
                started = time.monotonic()
                if lost:
                    mask = np.zeros(expected_shape, dtype=bool)
                else:
                    mask = self._call(OP_PROPAGATE_STEP, frame_index, [anchor_ref])
                    if not mask.any():
                        lost = True
                        result.lost_at[object_id] = frame_index
                result.masks[(frame_index, object_id)] = mask
                result.per_frame_seconds.append(time.monotonic() - started)
                done += 1
                if progress:
                    progress(done, total)
        return result


# ---------------------------------------------------------------------------
# Server side (used to mock a real model in tests and demos)
# ---------------------------------------------------------------------------

class _AdapterHandler(socketserver.BaseRequestHandler):
    def handle(self):
        dataset: VideoDataset | None = None
        # object_id -> (previous mask, anchor color)
        tracked: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        backend = self.server.backend  # type: ignore[attr-defined]
        while True:
            try:
                payload = read_message(self.request)
            except (ConnectionError, OSError):
                return
            try:
                opcode, fields = decode_request(payload)
                if opcode == OP_HANDSHAKE:
                    dataset = load_video_dataset(fields["dataset_path"])
                    response = ACK_RESPONSE
                elif dataset is None:
                    raise ProtocolError("handshake required before prediction requests")
                elif opcode == OP_PREDICT_FRAME:
                    points = fields["points"]
                    if not any(p.polarity == POSITIVE for p in points):
                        raise ProtocolError("no positive points")
                    frame = dataset.frame(fields["frame_index"])
                    response = encode_mask_response(backend.predict_frame(frame, points))
                elif opcode == OP_PROPAGATE_INIT:
                    points = fields["points"]
                    if not any(p.polarity == POSITIVE for p in points):
                        raise ProtocolError("no positive points")
                    frame = dataset.frame(fields["frame_index"])
                    mask = backend.predict_frame(frame, points)
                    first = next(p for p in points if p.polarity == POSITIVE)
                    tracked[first.object_id] = (mask, frame[first.y, first.x])
                    response = encode_mask_response(mask)
                elif opcode == OP_PROPAGATE_STEP:
                    points = fields["points"]
                    if len(points) != 1:
                        raise ProtocolError("propagate_step takes exactly one reference point")
                    object_id = points[0].object_id
                    if object_id not in tracked:
                        raise ProtocolError(f"object {object_id} has no propagation state")
                    prev_mask, anchor_color = tracked[object_id]
                    mask = reference_propagate_step(
                        prev_mask,
                        dataset.frame(fields["frame_index"]),
                        anchor_color,
                        getattr(backend, "tolerance", 12),
                        getattr(backend, "window_radius", 16),
                    )
                    if mask.any():
                        tracked[object_id] = (mask, anchor_color)
                    response = encode_mask_response(mask)
                else:
                    raise ProtocolError(f"unknown opcode {opcode}")
            except ProtocolError as exc:
                response = encode_error_response(STATUS_PROTOCOL, str(exc))
            except (ValidationError, FileNotFoundError) as exc:
                response = encode_error_response(STATUS_VALIDATION, str(exc))
            except MaskflowError as exc:
                response = encode_error_response(STATUS_INTERNAL, str(exc))
            try:
                write_message(self.request, response)
            except (ConnectionError, OSError):
                return


class AdapterServer:
    """Serves a backend over the adapter wire protocol on a unix socket."""

    def __init__(self, socket_path: str, backend=None):
        self.socket_path = str(socket_path)
        self._server = socketserver.ThreadingUnixStreamServer(self.socket_path, _AdapterHandler)
        self._server.daemon_threads = True
        self._server.backend = backend or ReferenceBackend()  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        Path(self.socket_path).unlink(missing_ok=True)

    def __enter__(self) -> "AdapterServer":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()
