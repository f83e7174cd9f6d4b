"""Inference backends: the abstract task interface, in-process synthetic
oracles, and a client for external backends speaking the wire protocol.
"""

from __future__ import annotations

import socket
import subprocess
import threading
from dataclasses import dataclass, field

from . import oracle as oracle_mod
from . import protocol
from .adjust import PATCH_SIZE, AdjustmentPrediction
from .geometry import Annotation, Detection, Point, SlideDims
from .oracle import OracleConfig
from .protocol import (
    BackendError,
    BackendTimeout,
    InferenceRequest,
    PatchRef,
    ProtocolError,
    TASK_ADJUST,
    TASK_CLASSIFY,
    TASK_DETECT,
)
from .tiling import Window


class Backend:
    """Detector, adjuster, and classifier behind one interface.

    Implementations must be deterministic for a fixed configuration so
    pipeline runs replay byte-identically.
    """

    def detect(self, slide_id: str, window: Window) -> list[Detection]:
        raise NotImplementedError

    def adjust(self, slide_id: str, center: Point) -> AdjustmentPrediction:
        raise NotImplementedError

    def classify(self, slide_id: str, center: Point) -> float:
        raise NotImplementedError

    def detect_many(self, slide_id: str, windows: list[Window]) -> list[list[Detection]]:
        return [self.detect(slide_id, w) for w in windows]

    def close(self) -> None:
        pass


@dataclass
class OracleBackend(Backend):
    """In-process synthetic backend driven by ground-truth annotations."""

    cfg: OracleConfig = field(default_factory=OracleConfig)
    slides: dict[str, tuple[SlideDims, list[Annotation]]] = field(default_factory=dict)

    def add_slide(self, slide_id: str, slide: SlideDims, annotations: list[Annotation]) -> None:
        self.slides[slide_id] = (slide, annotations)

    def _slide(self, slide_id: str) -> tuple[SlideDims, list[Annotation]]:
        try:
            return self.slides[slide_id]
        except KeyError:
            raise BackendError(f"unknown slide {slide_id!r}") from None

    def detect(self, slide_id: str, window: Window) -> list[Detection]:
        slide, gt = self._slide(slide_id)
        return oracle_mod.oracle_detect(window, gt, self.cfg, slide)

    def adjust(self, slide_id: str, center: Point) -> AdjustmentPrediction:
        _, gt = self._slide(slide_id)
        return oracle_mod.oracle_adjust(center, gt, self.cfg)

    def classify(self, slide_id: str, center: Point) -> float:
        _, gt = self._slide(slide_id)
        return oracle_mod.oracle_classify(center, gt, self.cfg)


class RemoteBackend(Backend):
    """Client for a backend process reached over a local socket or child
    process standard streams. Requests are correlated by id; this client
    issues them serially, so responses arrive in order."""

    def __init__(
        self,
        endpoint: str | None = None,
        argv: list[str] | None = None,
        detect_patch_size: int = 512,
        timeout: float = 30.0,
    ):
        if (endpoint is None) == (argv is None):
            raise ValueError("specify exactly one of endpoint or argv")
        self.detect_patch_size = detect_patch_size
        self._lock = threading.Lock()
        self._next_id = 0
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None
        if endpoint is not None:
            host, _, port = endpoint.rpartition(":")
            self._sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
            self._sock.settimeout(timeout)
            self._rfile = self._sock.makefile("rb")
            self._wfile = self._sock.makefile("wb")
        else:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
            self._rfile = self._proc.stdout
            self._wfile = self._proc.stdin
        self._handshake()

    def _handshake(self) -> None:
        protocol.write_frame(self._wfile, protocol.hello_message())
        msg = self._read()
        if msg.get("type") == "error":
            raise protocol.VersionMismatch(msg.get("message", "handshake rejected"))
        if msg.get("type") != "hello":
            raise ProtocolError(f"unexpected handshake reply {msg.get('type')!r}")
        protocol.check_version(msg)

    def _read(self) -> dict:
        try:
            return protocol.read_frame(self._rfile)
        except socket.timeout as exc:
            raise BackendTimeout(str(exc)) from exc
        except EOFError as exc:
            raise BackendError("backend closed the connection") from exc

    def _call(self, req: InferenceRequest, task: str) -> protocol.InferenceResponse:
        with self._lock:
            protocol.write_frame(self._wfile, protocol.encode_request(req))
            resp = protocol.decode_response(task, self._read())
        if resp.request_id != req.request_id:
            raise ProtocolError(
                f"response id {resp.request_id} does not match request {req.request_id}"
            )
        if len(resp.results) != len(req.patches):
            raise ProtocolError("response result count does not match batch size")
        return resp

    def _request(self, task: str, patches: list[PatchRef], patch_size: int) -> InferenceRequest:
        with self._lock:
            self._next_id += 1
            rid = self._next_id
        return InferenceRequest(rid, task, tuple(patches), patch_size)

    def detect(self, slide_id: str, window: Window) -> list[Detection]:
        return self.detect_many(slide_id, [window])[0]

    def detect_many(self, slide_id: str, windows: list[Window]) -> list[list[Detection]]:
        if not windows:
            return []
        size = windows[0].size
        patches = [PatchRef(slide_id, float(w.x), float(w.y), size) for w in windows]
        req = self._request(TASK_DETECT, patches, size)
        resp = self._call(req, TASK_DETECT)
        out = []
        for window, dets in zip(windows, resp.results):
            out.append([d.__class__(d.box, d.class_id, d.score, window) for d in dets])
        return out

    def _patch_at(self, slide_id: str, center: Point, size: int = PATCH_SIZE) -> PatchRef:
        return PatchRef(slide_id, center.x - size / 2, center.y - size / 2, size)

    def adjust(self, slide_id: str, center: Point) -> AdjustmentPrediction:
        req = self._request(TASK_ADJUST, [self._patch_at(slide_id, center)], PATCH_SIZE)
        return self._call(req, TASK_ADJUST).results[0]

    def classify(self, slide_id: str, center: Point) -> float:
        req = self._request(TASK_CLASSIFY, [self._patch_at(slide_id, center)], PATCH_SIZE)
        return self._call(req, TASK_CLASSIFY).results[0]

    def close(self) -> None:
        try:
            self._wfile.close()
        except Exception:
            pass
        if self._sock is not None:
            self._sock.close()
        if self._proc is not None:
            self._proc.wait(timeout=10)

    def __enter__(self) -> "RemoteBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
