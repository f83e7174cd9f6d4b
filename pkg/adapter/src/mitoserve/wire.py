"""Wire protocol: 4-byte big-endian length prefix + canonical UTF-8 JSON.

Independent implementation of the engine's backend protocol; only the
byte format is shared.
"""

from __future__ import annotations

import json
import struct

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 1 << 26

TASK_DETECT = "detect"
TASK_CLASSIFY = "classify"
TASK_ADJUST = "adjust"
TASKS = (TASK_DETECT, TASK_CLASSIFY, TASK_ADJUST)


class WireError(Exception):
    """Malformed frame or message; the connection can no longer be trusted."""


def dumps_canonical(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_frame(stream, obj: dict) -> None:
    payload = dumps_canonical(obj)
    if len(payload) > MAX_FRAME_BYTES:
        raise WireError(f"frame of {len(payload)} bytes exceeds limit")
    stream.write(struct.pack(">I", len(payload)) + payload)
    stream.flush()


def read_frame(stream) -> dict:
    header = stream.read(4)
    if not header:
        raise EOFError("stream closed")
    if len(header) < 4:
        raise WireError("truncated length prefix")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise WireError(f"declared frame length {length} exceeds limit")
    payload = stream.read(length)
    if len(payload) < length:
        raise WireError("truncated frame payload")
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"invalid frame payload: {exc}") from exc
    if not isinstance(obj, dict) or "type" not in obj:
        raise WireError("frame payload is not a typed message")
    return obj


def hello_message() -> dict:
    return {"type": "hello", "version": PROTOCOL_VERSION}


def error_message(message: str, request_id: int | None = None) -> dict:
    return {
        "type": "error",
        "version": PROTOCOL_VERSION,
        "request_id": request_id,
        "message": message,
    }


def response_message(request_id: int, results: list[dict]) -> dict:
    return {
        "type": "response",
        "version": PROTOCOL_VERSION,
        "request_id": request_id,
        "results": results,
    }
