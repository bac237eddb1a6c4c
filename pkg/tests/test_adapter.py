import os
import shlex
import socket
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import pytest

from groundloop.backends import (
    AdapterBackend,
    AdapterDetector,
    AdapterEndpoint,
    AdapterSession,
    Transport,
    handshake,
    remote_detect,
    remote_generate,
)
from groundloop.backends import wire
from groundloop.backends.mock_peer import PeerBehaviour, serve, serve_in_thread
from groundloop.core import BBox, FrameMeta, Grounding, TruthTag
from groundloop.errors import (
    BackendTimeoutError,
    BackendUnavailableError,
    CapabilityError,
    ConfigError,
    HandshakeTimeoutError,
    MalformedBackendReplyError,
    UnreachableError,
    VersionMismatchError,
)
from groundloop.pipeline import Backends, Roi, build_prompt, crop_roi, run_stream

from tests.conftest import make_frame

SRC = os.path.abspath(os.path.join(os.path.dirname(__file__), "../src"))


@contextmanager
def peer(behaviour=None, timeout_ms=2000):
    """A session wired to an in-process mock peer over a socket pair."""

    client, server = socket.socketpair()
    reader, writer = server.makefile("rb"), server.makefile("wb")
    thread = serve_in_thread(reader, writer, behaviour or PeerBehaviour())

    endpoint = AdapterEndpoint(transport=Transport.TCP, timeout_ms=timeout_ms)
    session = AdapterSession.from_socket(client, endpoint)
    try:
        handshake(endpoint, session)
        yield session
    finally:
        session.close()
        thread.join(timeout=2.0)
        for f in (reader, writer, server):
            f.close()


def roi_for(frame, bbox=BBox(0, 0, 4, 4)):
    return crop_roi(frame.pixels, frame.meta, bbox)


class TestHandshake:
    """Tests for connection setup."""

    def test_capabilities(self):
        """Test that the announced capabilities are recorded."""

        with peer(PeerBehaviour(capabilities=("detect",))) as session:
            assert session.peer_version == 1
            assert session.capabilities == frozenset({"detect"})

    def test_unknown_capabilities_are_ignored(self):
        """Test that capabilities outside the protocol are dropped."""

        with peer(PeerBehaviour(capabilities=("detect", "teleport"))) as session:
            assert session.capabilities == frozenset({"detect"})

    def test_version_mismatch(self):
        """Test that a peer speaking another version is refused."""

        with pytest.raises(VersionMismatchError):
            with peer(PeerBehaviour(version=2)):
                pass

    def test_silent_peer(self):
        """Test that a peer that never says hello times out."""

        with pytest.raises(HandshakeTimeoutError):
            with peer(PeerBehaviour(silent=True), timeout_ms=200):
                pass

    def test_unreachable_tcp(self):
        """Test that a closed port is reported as unreachable."""

        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()

        with pytest.raises(UnreachableError):
            handshake(AdapterEndpoint(transport=Transport.TCP, address=f"127.0.0.1:{port}", timeout_ms=500))

    def test_missing_address(self):
        """Test that connecting without an address is unreachable."""

        with pytest.raises(UnreachableError):
            handshake(AdapterEndpoint())

    def test_tcp_address_needs_a_port(self):
        """Test endpoint validation of tcp addresses."""

        with pytest.raises(ConfigError):
            AdapterEndpoint(transport=Transport.TCP, address="localhost")

    def test_endpoint_text_form(self):
        """Test that the transport reads its short config name."""

        endpoint = AdapterEndpoint.from_text({"adapter.transport": "tcp", "adapter.address": "localhost:9000"})
        assert endpoint.transport is Transport.TCP


class TestLifecycle:
    """Tests for closing sessions."""

    def test_close_with_idle_peer(self):
        """Test that close returns while the reader thread is blocked waiting for a line."""

        client, server = socket.socketpair()
        session = AdapterSession.from_socket(client, AdapterEndpoint(transport=Transport.TCP))

        closer = threading.Thread(target=session.close, daemon=True)
        closer.start()
        closer.join(timeout=3.0)

        try:
            assert not closer.is_alive()
            assert not session._thread.is_alive()
        finally:
            server.close()

    def test_close_is_idempotent(self):
        """Test that a second close is a no-op."""

        with peer() as session:
            session.close()
            session.close()

        assert session.orphans == 0


class TestRemoteDetect:
    """Tests for detection requests."""

    def test_detections(self):
        """Test that the peer's two detections come back untagged and inside the frame."""

        frame = make_frame(frame_id=4)
        with peer() as session:
            ds = remote_detect(session, frame)

        assert ds.frame_id == 4
        assert ds.labels == ("dog", "car")
        assert ds.detections[0].bbox == BBox(10, 10, 40, 30)
        assert all(d.truth_tag is TruthTag.UNKNOWN for d in ds.detections)

    def test_confidence_out_of_range(self):
        """Test that a confidence of 1.7 is a malformed reply."""

        bad = [{"bbox": {"x": 0, "y": 0, "w": 5, "h": 5}, "label": "dog", "confidence": 1.7}]
        with peer(PeerBehaviour(detections=bad)) as session:
            with pytest.raises(MalformedBackendReplyError):
                remote_detect(session, make_frame())

    def test_missing_capability(self):
        """Test that a peer without generate refuses generate before anything is sent."""

        with peer(PeerBehaviour(capabilities=("detect",))) as session:
            with pytest.raises(CapabilityError):
                remote_generate(session, build_prompt("dog"), roi_for(make_frame()))

    def test_dropped_request_times_out(self):
        """Test that an unanswered id times out while its neighbours succeed."""

        frame = make_frame()
        with peer(PeerBehaviour(drop_ids=frozenset({2})), timeout_ms=300) as session:
            assert remote_detect(session, frame).n == 2

            with pytest.raises(BackendTimeoutError):
                remote_detect(session, frame)

            assert remote_detect(session, frame).n == 2

    def test_peer_going_away(self):
        """Test that a closed connection fails later requests as unavailable."""

        client, server = socket.socketpair()
        endpoint = AdapterEndpoint(transport=Transport.TCP, timeout_ms=500)
        session = AdapterSession.from_socket(client, endpoint)
        session.capabilities = frozenset(wire.CAPABILITIES)
        server.close()

        try:
            with pytest.raises((BackendUnavailableError, BackendTimeoutError)):
                remote_detect(session, make_frame())
        finally:
            session.close()


class TestRemoteGenerate:
    """Tests for description requests."""

    def test_tokens_are_untagged(self):
        """Test that 'a dog sitting' comes back as three Unknown tokens."""

        frame = make_frame()
        with peer() as session:
            backend = AdapterBackend(session)
            det = remote_detect(session, frame).detections[0]
            d = backend.generate(build_prompt("dog"), roi_for(frame, det.bbox), det, ["dog"])

        assert [t.text for t in d.tokens] == ["a", "dog", "sitting"]
        assert all(t.grounding is Grounding.UNKNOWN for t in d.tokens)

    @pytest.mark.parametrize("text", ["", "   ", "a dog\nsitting"])
    def test_malformed_text(self, text):
        """Test that empty text and text with a line break are malformed."""

        with peer(PeerBehaviour(text=text)) as session:
            with pytest.raises(MalformedBackendReplyError):
                remote_generate(session, build_prompt("dog"), roi_for(make_frame()))

    def test_out_of_order_replies(self):
        """Test that 100 concurrent requests answered in shuffled batches each get their own reply."""

        frame = make_frame()
        roi = roi_for(frame)

        with peer(PeerBehaviour(echo=True, permute_batch=10, seed=3)) as session:
            def ask(i):
                prompt = build_prompt(f"thing{i}")
                return prompt, remote_generate(session, prompt, roi)

            with ThreadPoolExecutor(max_workers=16) as pool:
                results = list(pool.map(ask, range(100)))

            assert session.orphans == 0

        for prompt, description in results:
            assert description.tokens == wire.tokenize(prompt.text)


class TestWire:
    """Tests for the line format."""

    @pytest.mark.parametrize("line", [b"not json\n", b"[1, 2]\n", b'{"kind": "shout", "id": 1}\n', b'{"kind": "hello", "id": "1"}\n'])
    def test_malformed_lines(self, line):
        """Test that lines that are not protocol messages are rejected."""

        with pytest.raises(MalformedBackendReplyError):
            wire.WireMessage.decode(line)

    def test_message_line(self):
        """Test that a message is one newline-terminated JSON line."""

        line = wire.generate_response(7, "a dog").encode()
        assert line.endswith(b"\n") and line.count(b"\n") == 1
        assert wire.WireMessage.decode(line) == wire.generate_response(7, "a dog")

    def test_pixels(self):
        """Test the base64 pixel payload."""

        assert wire.decode_pixels(wire.encode_pixels(bytes(range(10)))) == bytes(range(10))
        with pytest.raises(MalformedBackendReplyError):
            wire.decode_pixels("***")

    def test_tokenize_strips_trailing_punctuation(self):
        """Test whitespace splitting with trailing punctuation removed."""

        assert [t.text for t in wire.tokenize("A dog, sitting.")] == ["A", "dog", "sitting"]

    def test_detections_are_clamped(self):
        """Test that boxes past the edge are clamped and boxes outside are malformed."""

        meta = FrameMeta(0, 100, 100)
        item = {"bbox": {"x": 90, "y": 90, "w": 20, "h": 20}, "label": "dog", "confidence": 0.5}
        assert wire.detections_from_wire(meta, [item]).detections[0].bbox == BBox(90, 90, 10, 10)

        outside = dict(item, bbox={"x": 100, "y": 0, "w": 5, "h": 5})
        with pytest.raises(MalformedBackendReplyError):
            wire.detections_from_wire(meta, [outside])

        with pytest.raises(MalformedBackendReplyError):
            wire.detections_from_wire(meta, {"bbox": None})


class TestTransports:
    """Tests for the real transports and for streaming through the adapter."""

    def test_tcp(self):
        """Test a handshake and a detect over a TCP listener."""

        listener = socket.create_server(("127.0.0.1", 0))
        port = listener.getsockname()[1]

        def accept():
            conn, _ = listener.accept()
            with conn, conn.makefile("rb") as r, conn.makefile("wb") as w:
                serve(r, w)

        thread = threading.Thread(target=accept, daemon=True)
        thread.start()

        try:
            endpoint = AdapterEndpoint(transport=Transport.TCP, address=f"127.0.0.1:{port}")
            with handshake(endpoint) as session:
                assert remote_detect(session, make_frame()).n == 2
        finally:
            thread.join(timeout=2.0)
            listener.close()

    def test_child_process(self, monkeypatch):
        """Test the pipe transport against the mock peer run as a module."""

        monkeypatch.setenv("PYTHONPATH", os.pathsep.join(filter(None, [SRC, os.environ.get("PYTHONPATH")])))
        command = f"{shlex.quote(sys.executable)} -m groundloop.backends.mock_peer --capabilities detect,generate"
        endpoint = AdapterEndpoint(transport=Transport.CHILD_PROCESS, address=command, timeout_ms=10000)

        with handshake(endpoint) as session:
            assert session.capabilities == frozenset({"detect", "generate"})
            assert remote_detect(session, make_frame()).labels == ("dog", "car")

    def test_stream_through_adapter(self):
        """Test that a stream runs end to end on adapter backends."""

        frames = [make_frame(frame_id=i) for i in range(3)]
        seen = []

        with peer() as session:
            backends = Backends(AdapterDetector(session), AdapterBackend(session))
            report = run_stream(frames, backends, sink=seen.append)

        assert report.frames == 3
        assert [r.frame_id for r in seen] == [0, 1, 2]
        # "a dog sitting" for both the dog and the car: 2 of 4 content tokens grounded
        assert seen[0].report.gamma == 0.5


def test_roi_crosses_the_wire():
    """Test that a generate request carries the crop geometry and bytes."""

    roi = Roi(2, BBox(1, 1, 2, 2), bytes(range(12)))
    msg = wire.generate_request(5, "Describe the dog.", roi.source_frame_id, roi.bbox, roi.channels, roi.pixels)
    decoded = wire.WireMessage.decode(msg.encode())

    assert decoded.payload["roi"] == {"frame_id": 2, "bbox": {"x": 1, "y": 1, "w": 2, "h": 2}, "channels": 3}
    assert wire.decode_pixels(decoded.payload["pixels"]) == roi.pixels
