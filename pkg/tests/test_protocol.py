import io
import json
import struct

import pytest
from hypothesis import given, strategies as st

from mitopipe import protocol
from mitopipe.adjust import AdjustmentPrediction
from mitopipe.geometry import Box, CellClass, Detection, Point
from mitopipe.protocol import (
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    TASK_ADJUST,
    TASK_CLASSIFY,
    TASK_DETECT,
    BackendError,
    InferenceRequest,
    InferenceResponse,
    PatchRef,
    ProtocolError,
    VersionMismatch,
    check_version,
    decode_request,
    decode_response,
    dumps_canonical,
    encode_request,
    encode_response,
    error_message,
    hello_message,
    read_frame,
    write_frame,
)


def roundtrip_frame(msg):
    buf = io.BytesIO()
    write_frame(buf, msg)
    buf.seek(0)
    return read_frame(buf)


class TestFraming:
    def test_roundtrip(self):
        msg = {"type": "hello", "version": 1, "z": [1, 2], "a": "x"}
        assert roundtrip_frame(msg) == msg

    def test_length_prefix_is_big_endian(self):
        buf = io.BytesIO()
        write_frame(buf, hello_message())
        raw = buf.getvalue()
        (length,) = struct.unpack(">I", raw[:4])
        assert length == len(raw) - 4
        assert json.loads(raw[4:]) == hello_message()

    def test_canonical_bytes_are_stable(self):
        a = dumps_canonical({"b": 1, "a": 2})
        b = dumps_canonical({"a": 2, "b": 1})
        assert a == b == b'{"a":2,"b":1}'

    def test_eof_on_empty_stream(self):
        with pytest.raises(EOFError):
            read_frame(io.BytesIO())

    def test_truncated_prefix(self):
        with pytest.raises(ProtocolError):
            read_frame(io.BytesIO(b"\x00\x00"))

    def test_truncated_payload(self):
        with pytest.raises(ProtocolError):
            read_frame(io.BytesIO(struct.pack(">I", 10) + b"short"))

    def test_invalid_json(self):
        payload = b"not json"
        with pytest.raises(ProtocolError):
            read_frame(io.BytesIO(struct.pack(">I", len(payload)) + payload))

    def test_untyped_payload(self):
        payload = dumps_canonical({"version": 1})
        with pytest.raises(ProtocolError):
            read_frame(io.BytesIO(struct.pack(">I", len(payload)) + payload))

    def test_oversized_declared_length(self):
        with pytest.raises(ProtocolError):
            read_frame(io.BytesIO(struct.pack(">I", MAX_FRAME_BYTES + 1)))


class TestVersioning:
    def test_hello_carries_version(self):
        assert hello_message() == {"type": "hello", "version": PROTOCOL_VERSION}

    def test_mismatch_raises(self):
        with pytest.raises(VersionMismatch):
            check_version({"type": "hello", "version": PROTOCOL_VERSION + 1})
        with pytest.raises(VersionMismatch):
            check_version({"type": "hello"})


class TestRequestCodec:
    def test_roundtrip(self):
        req = InferenceRequest(
            7, TASK_DETECT,
            (PatchRef("slide-1", 0.0, 512.0, 512), PatchRef("slide-1", 512.0, 512.0, 512)),
            512,
        )
        assert decode_request(roundtrip_frame(encode_request(req))) == req

    def test_inline_raster_preserved(self):
        req = InferenceRequest(1, TASK_CLASSIFY, (PatchRef("s", 1.5, 2.5, 128, "QUJD"),), 128)
        out = decode_request(encode_request(req))
        assert out.patches[0].data_b64 == "QUJD"

    def test_validation(self):
        with pytest.raises(ValueError):
            InferenceRequest(1, "segment", (PatchRef("s", 0, 0, 128),), 128)
        with pytest.raises(ValueError):
            InferenceRequest(1, TASK_DETECT, (), 512)
        with pytest.raises(ValueError):
            InferenceRequest(1, TASK_DETECT, (PatchRef("s", 0, 0, 256),), 512)

    def test_malformed_message(self):
        with pytest.raises(ProtocolError):
            decode_request({"type": "request", "version": PROTOCOL_VERSION, "task": TASK_DETECT})


class TestResponseCodec:
    def test_detect_roundtrip(self):
        dets = [
            Detection(Box(Point(10.5, 20.25), 50, 50), CellClass.MITOSIS, 0.875),
            Detection(Box(Point(100, 200), 40, 30), CellClass.MITOSIS_LIKE, 0.25),
        ]
        resp = InferenceResponse(3, (dets, []))
        out = decode_response(TASK_DETECT, roundtrip_frame(encode_response(TASK_DETECT, resp)))
        assert out.request_id == 3
        assert list(out.results[0]) == dets
        assert list(out.results[1]) == []

    def test_classify_roundtrip(self):
        resp = InferenceResponse(4, (0.75, 0.125))
        out = decode_response(TASK_CLASSIFY, encode_response(TASK_CLASSIFY, resp))
        assert out.results == (0.75, 0.125)

    def test_adjust_roundtrip(self):
        pred = AdjustmentPrediction(3.5, -2.0, (0.9, 0.1))
        out = decode_response(TASK_ADJUST, encode_response(TASK_ADJUST, InferenceResponse(5, (pred,))))
        got = out.results[0]
        assert (got.d_x, got.d_y) == (3.5, -2.0)
        assert got.positive_score == pytest.approx(0.9)

    def test_embeddings_roundtrip(self):
        resp = InferenceResponse(6, (0.5,), embeddings=((1.0, 2.0, 3.0),))
        out = decode_response(TASK_CLASSIFY, encode_response(TASK_CLASSIFY, resp))
        assert out.embeddings == ((1.0, 2.0, 3.0),)

    def test_error_message_raises_backend_error(self):
        with pytest.raises(BackendError) as exc:
            decode_response(TASK_DETECT, error_message("gpu on fire", request_id=9))
        assert exc.value.request_id == 9

    def test_wrong_type_raises(self):
        with pytest.raises(ProtocolError):
            decode_response(TASK_DETECT, {"type": "hello", "version": PROTOCOL_VERSION})

    def test_stale_version_raises(self):
        msg = encode_response(TASK_CLASSIFY, InferenceResponse(1, (0.5,)))
        msg["version"] = 99
        with pytest.raises(VersionMismatch):
            decode_response(TASK_CLASSIFY, msg)


@given(
    rid=st.integers(0, 2**31),
    task=st.sampled_from([TASK_DETECT, TASK_CLASSIFY, TASK_ADJUST]),
    n=st.integers(1, 5),
    x=st.floats(-1e6, 1e6),
    y=st.floats(-1e6, 1e6),
    size=st.integers(1, 4096),
    slide=st.text(min_size=1, max_size=30),
)
def test_request_fuzz_roundtrip(rid, task, n, x, y, size, slide):
    req = InferenceRequest(rid, task, tuple(PatchRef(slide, x, y, size) for _ in range(n)), size)
    assert decode_request(roundtrip_frame(encode_request(req))) == req


@given(data=st.binary(max_size=64))
def test_garbage_frames_never_desync_silently(data):
    # any malformed input raises a typed error instead of returning junk
    buf = io.BytesIO(data)
    try:
        msg = read_frame(buf)
    except (ProtocolError, EOFError):
        return
    assert isinstance(msg, dict) and "type" in msg
