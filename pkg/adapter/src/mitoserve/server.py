"""Serve loop: handshake, request dispatch to per-task callables, typed
error replies. Handles one connection at a time; batching inside a
request is the throughput lever.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass
from typing import Callable

from . import wire


@dataclass
class AdapterConfig:
    """Task callables plus serving limits.

    detect(slide_id, x, y, size) -> list of detection dicts;
    adjust/classify(slide_id, cx, cy) -> result dict.
    Every request_id is answered exactly once (response or error).
    """

    detect: Callable[[str, int, int, int], list]
    adjust: Callable[[str, float, float], dict]
    classify: Callable[[str, float, float], dict]
    max_batch: int = 1024
    version: int = wire.PROTOCOL_VERSION


def _validate_request(msg: dict) -> tuple[int, str, list[dict], int]:
    try:
        rid = int(msg["request_id"])
        task = msg["task"]
        patches = msg["patches"]
        patch_size = int(msg["patch_size"])
    except (KeyError, TypeError, ValueError) as exc:
        raise wire.WireError(f"bad request message: {exc}") from exc
    if task not in wire.TASKS:
        raise wire.WireError(f"unknown task {task!r}")
    if not isinstance(patches, list) or not patches:
        raise wire.WireError("empty patch batch")
    for p in patches:
        if not isinstance(p, dict) or int(p.get("size", -1)) != patch_size:
            raise wire.WireError("non-uniform or malformed patch")
    return rid, task, patches, patch_size


def _handle_request(cfg: AdapterConfig, msg: dict) -> dict:
    rid, task, patches, patch_size = _validate_request(msg)
    if len(patches) > cfg.max_batch:
        return wire.error_message(f"batch of {len(patches)} exceeds {cfg.max_batch}", rid)
    results = []
    try:
        for p in patches:
            slide = p["slide"]
            if task == wire.TASK_DETECT:
                dets = cfg.detect(slide, int(p["x"]), int(p["y"]), patch_size)
                results.append({"detections": dets})
            else:
                cx = float(p["x"]) + patch_size / 2
                cy = float(p["y"]) + patch_size / 2
                fn = cfg.adjust if task == wire.TASK_ADJUST else cfg.classify
                results.append(fn(slide, cx, cy))
    except Exception as exc:  # model failure: report, keep the connection
        return wire.error_message(f"model error: {exc}", rid)
    return wire.response_message(rid, results)


def serve_stream(cfg: AdapterConfig, rfile, wfile) -> None:
    """Run one connection to completion.

    A version-mismatched handshake gets a typed rejection; a malformed
    frame gets an error reply and the connection is dropped, since the
    byte stream can no longer be trusted.
    """
    try:
        hello = wire.read_frame(rfile)
    except (wire.WireError, EOFError):
        return
    if hello.get("type") != "hello" or hello.get("version") != cfg.version:
        wire.write_frame(wfile, wire.error_message(
            f"unsupported protocol version {hello.get('version')!r}"))
        return
    wire.write_frame(wfile, wire.hello_message())
    while True:
        try:
            msg = wire.read_frame(rfile)
        except EOFError:
            return
        except wire.WireError as exc:
            wire.write_frame(wfile, wire.error_message(f"malformed frame: {exc}"))
            return
        if msg.get("type") != "request":
            wire.write_frame(wfile, wire.error_message(
                f"unexpected message type {msg.get('type')!r}"))
            continue
        try:
            reply = _handle_request(cfg, msg)
        except wire.WireError as exc:
            reply = wire.error_message(str(exc), msg.get("request_id"))
        wire.write_frame(wfile, reply)


def serve_stdio(cfg: AdapterConfig) -> None:
    import sys

    serve_stream(cfg, sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(cfg: AdapterConfig, host: str, port: int, max_connections: int | None = None) -> None:
    """Accept connections serially until max_connections is exhausted."""
    with socket.create_server((host, port)) as server:
        served = 0
        while max_connections is None or served < max_connections:
            conn, _ = server.accept()
            with conn:
                rfile = conn.makefile("rb")
                wfile = conn.makefile("wb")
                serve_stream(cfg, rfile, wfile)
            served += 1
