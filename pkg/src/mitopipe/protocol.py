"""Wire protocol between the engine and external inference backends.

Each message is a 4-byte big-endian length prefix followed by a UTF-8
JSON payload carrying a mandatory protocol version. Patches are passed by
reference (slide id, origin, size) so backends read tiles themselves, or
inline as base64 raster for tile-less backends.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from .adjust import AdjustmentPrediction
from .geometry import Box, Detection, Point

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 1 << 26

TASK_DETECT = "detect"
TASK_CLASSIFY = "classify"
TASK_ADJUST = "adjust"
TASKS = (TASK_DETECT, TASK_CLASSIFY, TASK_ADJUST)


class ProtocolError(Exception):
    """Malformed frame, bad message shape, or desynchronized stream."""


class VersionMismatch(ProtocolError):
    pass


class BackendError(Exception):
    """Error reported by (or about) the backend for a specific request."""

    def __init__(self, message: str, request_id: int | None = None):
        super().__init__(message)
        self.request_id = request_id


class BackendTimeout(BackendError):
    pass


@dataclass(frozen=True)
class PatchRef:
    """A patch located by slide id and origin; `data_b64` optionally inlines
    the raster for backends that cannot read tiles."""

    slide_id: str
    x: float
    y: float
    size: int
    data_b64: str | None = None


@dataclass(frozen=True)
class InferenceRequest:
    request_id: int
    task: str
    patches: tuple[PatchRef, ...]
    patch_size: int

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if not self.patches:
            raise ValueError("empty patch batch")
        if any(p.size != self.patch_size for p in self.patches):
            raise ValueError("non-uniform patch size in request")


@dataclass(frozen=True)
class InferenceResponse:
    """Per-patch results: list[Detection] for detect, float score for
    classify, AdjustmentPrediction for adjust."""

    request_id: int
    results: tuple[object, ...]
    embeddings: tuple[tuple[float, ...], ...] | None = None


def dumps_canonical(obj: dict) -> bytes:
    # Sorted keys and fixed separators make transcripts byte-reproducible.
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_frame(stream, obj: dict) -> None:
    payload = dumps_canonical(obj)
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds limit")
    stream.write(struct.pack(">I", len(payload)) + payload)
    stream.flush()


def read_frame(stream) -> dict:
    header = stream.read(4)
    if not header:
        raise EOFError("stream closed")
    if len(header) < 4:
        raise ProtocolError("truncated length prefix")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"declared frame length {length} exceeds limit")
    payload = stream.read(length)
    if len(payload) < length:
        raise ProtocolError("truncated frame payload")
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"invalid frame payload: {exc}") from exc
    if not isinstance(obj, dict) or "type" not in obj:
        raise ProtocolError("frame payload is not a typed message")
    return obj


def check_version(msg: dict) -> None:
    if msg.get("version") != PROTOCOL_VERSION:
        raise VersionMismatch(f"protocol version {msg.get('version')!r}, expected {PROTOCOL_VERSION}")


def hello_message() -> dict:
    return {"type": "hello", "version": PROTOCOL_VERSION}


def error_message(message: str, request_id: int | None = None) -> dict:
    return {
        "type": "error",
        "version": PROTOCOL_VERSION,
        "request_id": request_id,
        "message": message,
    }


def _encode_patch(p: PatchRef) -> dict:
    d = {"slide": p.slide_id, "x": p.x, "y": p.y, "size": p.size}
    if p.data_b64 is not None:
        d["b64"] = p.data_b64
    return d


def _decode_patch(d: dict) -> PatchRef:
    try:
        return PatchRef(d["slide"], float(d["x"]), float(d["y"]), int(d["size"]), d.get("b64"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad patch reference: {exc}") from exc


def encode_request(req: InferenceRequest) -> dict:
    return {
        "type": "request",
        "version": PROTOCOL_VERSION,
        "request_id": req.request_id,
        "task": req.task,
        "patch_size": req.patch_size,
        "patches": [_encode_patch(p) for p in req.patches],
    }


def decode_request(msg: dict) -> InferenceRequest:
    check_version(msg)
    try:
        return InferenceRequest(
            request_id=int(msg["request_id"]),
            task=msg["task"],
            patches=tuple(_decode_patch(p) for p in msg["patches"]),
            patch_size=int(msg["patch_size"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad request message: {exc}") from exc


def _encode_detection(d: Detection) -> dict:
    return {
        "cx": d.center.x,
        "cy": d.center.y,
        "w": d.box.w,
        "h": d.box.h,
        "class_id": int(d.class_id),
        "score": d.score,
    }


def _decode_detection(d: dict) -> Detection:
    return Detection(
        Box(Point(float(d["cx"]), float(d["cy"])), float(d["w"]), float(d["h"])),
        int(d["class_id"]),
        float(d["score"]),
    )


def _encode_result(task: str, result: object) -> dict:
    if task == TASK_DETECT:
        return {"detections": [_encode_detection(d) for d in result]}
    if task == TASK_CLASSIFY:
        return {"score": result}
    return {
        "score": result.positive_score,
        "dx": result.d_x,
        "dy": result.d_y,
    }


def _decode_result(task: str, d: dict) -> object:
    if task == TASK_DETECT:
        return [_decode_detection(x) for x in d["detections"]]
    if task == TASK_CLASSIFY:
        return float(d["score"])
    score = float(d["score"])
    return AdjustmentPrediction(float(d["dx"]), float(d["dy"]), (score, 1.0 - score))


def encode_response(task: str, resp: InferenceResponse) -> dict:
    msg = {
        "type": "response",
        "version": PROTOCOL_VERSION,
        "request_id": resp.request_id,
        "results": [_encode_result(task, r) for r in resp.results],
    }
    if resp.embeddings is not None:
        msg["embeddings"] = [list(e) for e in resp.embeddings]
    return msg


def decode_response(task: str, msg: dict) -> InferenceResponse:
    check_version(msg)
    if msg["type"] == "error":
        raise BackendError(msg.get("message", "backend error"), msg.get("request_id"))
    if msg["type"] != "response":
        raise ProtocolError(f"unexpected message type {msg['type']!r}")
    try:
        embeddings = msg.get("embeddings")
        return InferenceResponse(
            request_id=int(msg["request_id"]),
            results=tuple(_decode_result(task, r) for r in msg["results"]),
            embeddings=tuple(tuple(float(v) for v in e) for e in embeddings)
            if embeddings is not None
            else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad response message: {exc}") from exc
