import io
import struct

from mitoserve import wire
from mitoserve.server import AdapterConfig, serve_stream


def make_cfg(detect=None, adjust=None, classify=None):
    return AdapterConfig(
        detect=detect or (lambda s, x, y, k: []),
        adjust=adjust or (lambda s, cx, cy: {"score": 0.5, "dx": 0.0, "dy": 0.0}),
        classify=classify or (lambda s, cx, cy: {"score": 0.5}),
    )


def run_session(cfg, *messages, raw_tail=b""):
    buf = io.BytesIO()
    for m in messages:
        wire.write_frame(buf, m)
    buf.write(raw_tail)
    buf.seek(0)
    out = io.BytesIO()
    serve_stream(cfg, buf, out)
    out.seek(0)
    replies = []
    while True:
        try:
            replies.append(wire.read_frame(out))
        except EOFError:
            return replies


def request(rid, task="classify", n=1, size=128):
    return {
        "type": "request", "version": wire.PROTOCOL_VERSION, "request_id": rid,
        "task": task, "patch_size": size,
        "patches": [{"slide": "s", "x": 0.0, "y": 0.0, "size": size}] * n,
    }


def test_handshake_then_response():
    replies = run_session(make_cfg(), wire.hello_message(), request(1))
    assert replies[0] == wire.hello_message()
    assert replies[1]["type"] == "response"
    assert replies[1]["request_id"] == 1
    assert replies[1]["results"] == [{"score": 0.5}]


def test_version_mismatch_rejected():
    replies = run_session(make_cfg(), {"type": "hello", "version": 99})
    assert len(replies) == 1
    assert replies[0]["type"] == "error"


def test_missing_handshake_rejected():
    replies = run_session(make_cfg(), request(1))
    assert replies and replies[0]["type"] == "error"


def test_batched_request_answered_in_order():
    calls = []

    def classify(s, cx, cy):
        calls.append(cx)
        return {"score": len(calls) / 10}

    replies = run_session(make_cfg(classify=classify), wire.hello_message(),
                          request(5, n=3))
    assert replies[1]["results"] == [{"score": 0.1}, {"score": 0.2}, {"score": 0.3}]


def test_model_exception_reports_request_id_and_keeps_connection():
    def bad(s, cx, cy):
        raise RuntimeError("weights missing")

    cfg = make_cfg(classify=bad)
    replies = run_session(cfg, wire.hello_message(), request(7), request(8, task="adjust"))
    assert replies[1]["type"] == "error"
    assert replies[1]["request_id"] == 7
    assert "weights missing" in replies[1]["message"]
    # the next request on the same connection still gets served
    assert replies[2]["type"] == "response" and replies[2]["request_id"] == 8


def test_malformed_frame_gets_error_then_reset():
    replies = run_session(make_cfg(), wire.hello_message(),
                          raw_tail=struct.pack(">I", 4) + b"junk")
    assert replies[-1]["type"] == "error"
    assert "malformed frame" in replies[-1]["message"]


def test_bad_request_shape_is_typed_error():
    msg = {"type": "request", "version": wire.PROTOCOL_VERSION, "request_id": 2,
           "task": "segment", "patch_size": 128,
           "patches": [{"slide": "s", "x": 0, "y": 0, "size": 128}]}
    replies = run_session(make_cfg(), wire.hello_message(), msg, request(3))
    assert replies[1]["type"] == "error"
    assert replies[2]["request_id"] == 3  # connection survives shape errors


def test_non_request_message_is_rejected_but_not_fatal():
    replies = run_session(make_cfg(), wire.hello_message(),
                          {"type": "status", "version": 1}, request(4))
    assert replies[1]["type"] == "error"
    assert replies[2]["type"] == "response"


def test_oversized_batch_rejected():
    cfg = make_cfg()
    cfg.max_batch = 2
    replies = run_session(cfg, wire.hello_message(), request(9, n=3))
    assert replies[1]["type"] == "error"
    assert replies[1]["request_id"] == 9
