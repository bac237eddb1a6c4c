import enum
import itertools
import logging
import shlex
import socket
import subprocess
import threading
import time
from collections import OrderedDict
from typing import Any, BinaryIO, Dict, FrozenSet, Optional, Sequence

from ..core.section import ConfigSection
from ..core.types import Description, Detection, DetectionSet, validate_detection_set
from ..core.var import ConfigVar
from ..errors import (
    BackendTimeoutError,
    BackendUnavailableError,
    CapabilityError,
    ConfigError,
    HandshakeTimeoutError,
    MalformedBackendReplyError,
    ProtocolError,
    UnreachableError,
    ValidationError,
    VersionMismatchError,
)
from ..pipeline.frame import Frame
from ..pipeline.stages import Prompt, Roi
from . import wire

logger = logging.getLogger(__name__)

MAX_OUTSTANDING = 32
# Replies nobody waits for (late or unknown ids) are kept this long, oldest dropped first
MAX_ORPHANS = 256


class Transport(str, enum.Enum):
    CHILD_PROCESS = "ChildProcessPipes"
    TCP = "TcpSocket"


class AdapterEndpoint(ConfigSection):
    """Where the external detector/captioner lives and how long to wait for it."""

    class Config:
        key_prefix = "adapter."

    transport: Transport = ConfigVar(
        default=Transport.CHILD_PROCESS,
        value_map={Transport.CHILD_PROCESS: "pipes", Transport.TCP: "tcp"},
        help="pipes | tcp",
    )
    address: str = ConfigVar(default="", help="command line (pipes) or host:port (tcp)")
    protocol_version: int = ConfigVar(default=wire.PROTOCOL_VERSION, help="protocol version to announce")
    timeout_ms: int = ConfigVar(default=2000, help="per-request and handshake timeout")

    def validate(self) -> None:
        if self.timeout_ms <= 0:
            raise ConfigError(self.key_of("timeout_ms"), f"must be positive, got {self.timeout_ms}")
        if self.transport is Transport.TCP and self.address and ":" not in self.address:
            raise ConfigError(self.key_of("address"), f"expected host:port, got {self.address!r}")


class _Pending:
    __slots__ = ("event", "reply")

    def __init__(self):
        self.event = threading.Event()
        self.reply: Optional[Any] = None


class AdapterSession:
    """
    One connection to a peer: a single reader thread, a single writer lock,
    any number of concurrent callers correlated by message id.
    """

    def __init__(self, reader: BinaryIO, writer: BinaryIO, endpoint: AdapterEndpoint, closer=None):
        self.endpoint = endpoint
        self.capabilities: FrozenSet[str] = frozenset()
        self.peer_version: Optional[int] = None

        self._reader = reader
        self._writer = writer
        self._closer = closer
        self._write_lock = threading.Lock()
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(MAX_OUTSTANDING)
        self._ids = itertools.count(1)
        self._pending: Dict[int, _Pending] = {}
        self._orphans: "OrderedDict[int, wire.WireMessage]" = OrderedDict()
        self._hello = _Pending()
        self._closed = False
        self._failure: Optional[Exception] = None

        self._thread = threading.Thread(target=self._read_loop, name="groundloop-adapter-reader", daemon=True)
        self._thread.start()

    # ---
    # Construction

    @classmethod
    def from_socket(cls, sock: socket.socket, endpoint: Optional[AdapterEndpoint] = None) -> "AdapterSession":
        endpoint = endpoint or AdapterEndpoint(transport=Transport.TCP)
        sock.settimeout(None)
        reader = sock.makefile("rb")
        writer = sock.makefile("wb")

        def close():
            # Shut down first: closing a reader blocked in readline() waits on its lock
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            for f in (writer, reader):
                try:
                    f.close()
                except OSError:
                    pass
            sock.close()

        return cls(reader, writer, endpoint, close)

    @classmethod
    def connect(cls, endpoint: AdapterEndpoint) -> "AdapterSession":
        if not endpoint.address:
            raise UnreachableError("", ValueError("no adapter address configured"))

        if endpoint.transport is Transport.TCP:
            host, _, port = endpoint.address.rpartition(":")
            try:
                sock = socket.create_connection((host, int(port)), timeout=endpoint.timeout_ms / 1000.0)
            except (OSError, ValueError) as e:
                raise UnreachableError(endpoint.address, e)
            return cls.from_socket(sock, endpoint)

        try:
            proc = subprocess.Popen(shlex.split(endpoint.address), stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except (OSError, ValueError) as e:
            raise UnreachableError(endpoint.address, e)

        def close():
            # The peer exits on stdin EOF, which ends the reader thread's readline()
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=endpoint.timeout_ms / 1000.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
            try:
                proc.stdout.close()
            except OSError:
                pass

        return cls(proc.stdout, proc.stdin, endpoint, close)

    # ---
    # Reader side

    def _read_loop(self):
        try:
            while True:
                line = self._reader.readline(wire.MAX_LINE_BYTES + 1)
                if not line:
                    raise BackendUnavailableError("peer closed the connection")
                if not line.endswith(b"\n"):
                    if len(line) > wire.MAX_LINE_BYTES:
                        raise ProtocolError("peer sent a line over the size limit")
                    raise BackendUnavailableError("peer closed the connection mid-line")

                try:
                    msg = wire.WireMessage.decode(line)
                except MalformedBackendReplyError as e:
                    logger.warning(f"Discarding undecodable line from peer: {e}")
                    continue

                self._dispatch(msg)
        except (OSError, ValueError) as e:
            self._fail(BackendUnavailableError(f"connection lost: {e}"))
        except Exception as e:
            self._fail(e)

    def _dispatch(self, msg: wire.WireMessage):
        if msg.kind == wire.HELLO:
            self._hello.reply = msg
            self._hello.event.set()
            return

        with self._lock:
            waiter = self._pending.pop(msg.id, None)
            if waiter is None:
                self._orphans[msg.id] = msg
                while len(self._orphans) > MAX_ORPHANS:
                    self._orphans.popitem(last=False)

        if waiter is None:
            logger.warning(f"Reply {msg.id} ({msg.kind}) has no waiting request; holding it")
            return

        waiter.reply = msg
        waiter.event.set()

    def _fail(self, error: Exception):
        with self._lock:
            if self._failure is None and not self._closed:
                logger.error(f"Adapter session failed: {error}")
            self._failure = self._failure or error
            waiters = list(self._pending.values())
            self._pending.clear()

        for waiter in waiters + [self._hello]:
            waiter.event.set()

    # ---
    # Requests

    def _send(self, msg: wire.WireMessage):
        line = msg.encode()
        with self._write_lock:
            try:
                self._writer.write(line)
                self._writer.flush()
            except (OSError, ValueError) as e:
                raise BackendUnavailableError(f"cannot write to peer: {e}")

    def request(self, kind: str, payload_fn, expect: str) -> wire.WireMessage:
        """
        Sends one request and waits for the reply carrying its id.

        ``payload_fn(msg_id)`` builds the message. Waiting and the
        outstanding-request slot share ``timeout_ms``.
        """

        timeout = self.endpoint.timeout_ms / 1000.0
        start = time.monotonic()

        if self._failure is not None:
            raise BackendUnavailableError(str(self._failure))

        if not self._slots.acquire(timeout=timeout):
            raise BackendTimeoutError(f"{kind} slot", (time.monotonic() - start) * 1000.0)

        try:
            msg_id = next(self._ids)
            msg = payload_fn(msg_id)
            waiter = _Pending()
            with self._lock:
                self._pending[msg_id] = waiter

            try:
                self._send(msg)
            except BackendUnavailableError:
                with self._lock:
                    self._pending.pop(msg_id, None)
                raise

            remaining = max(0.0, timeout - (time.monotonic() - start))
            if not waiter.event.wait(remaining):
                with self._lock:
                    self._pending.pop(msg_id, None)
                raise BackendTimeoutError(f"{kind} #{msg_id}", (time.monotonic() - start) * 1000.0)
        finally:
            self._slots.release()

        reply = waiter.reply
        if reply is None:
            raise BackendUnavailableError(str(self._failure or "session closed"))
        if reply.kind == wire.ERROR:
            raise BackendUnavailableError(f"peer reported: {reply.payload.get('message', '')}")
        if reply.kind != expect:
            raise MalformedBackendReplyError(f"expected {expect} for id {msg_id}, got {reply.kind}")

        return reply

    def take_orphan(self, msg_id: int) -> Optional[wire.WireMessage]:
        with self._lock:
            return self._orphans.pop(msg_id, None)

    @property
    def orphans(self) -> int:
        with self._lock:
            return len(self._orphans)

    def require(self, capability: str):
        if capability not in self.capabilities:
            raise CapabilityError(capability)

    # ---
    # Lifecycle

    def close(self):
        if self._closed:
            return
        self._closed = True
        if self._closer is not None:
            self._closer()
        self._thread.join(timeout=1.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def handshake(endpoint: AdapterEndpoint, session: Optional[AdapterSession] = None) -> AdapterSession:
    """
    Connects (unless ``session`` is given) and exchanges hello messages.

    :raises UnreachableError, HandshakeTimeoutError, VersionMismatchError:
    """

    session = session or AdapterSession.connect(endpoint)

    try:
        session._send(wire.hello(endpoint.protocol_version))
    except BackendUnavailableError as e:
        session.close()
        raise UnreachableError(endpoint.address, e)

    if not session._hello.event.wait(endpoint.timeout_ms / 1000.0) or session._hello.reply is None:
        session.close()
        raise HandshakeTimeoutError(endpoint.timeout_ms)

    payload = session._hello.reply.payload
    version = payload.get("version")
    if version != wire.PROTOCOL_VERSION:
        session.close()
        raise VersionMismatchError(wire.PROTOCOL_VERSION, version)

    caps = payload.get("capabilities", [])
    session.peer_version = version
    session.capabilities = frozenset(c for c in caps if c in wire.CAPABILITIES) if isinstance(caps, list) else frozenset()

    logger.info(f"Adapter handshake done: v{version}, capabilities {sorted(session.capabilities)}")
    return session


def remote_detect(session: AdapterSession, frame: Frame) -> DetectionSet:
    session.require("detect")

    reply = session.request(
        wire.DETECT_REQ,
        lambda msg_id: wire.detect_request(msg_id, frame.meta, frame.pixels),
        wire.DETECT_RESP,
    )
    ds = wire.detections_from_wire(frame.meta, reply.payload.get("detections"))

    try:
        return validate_detection_set(ds, frame.meta)
    except ValidationError as e:
        raise MalformedBackendReplyError("detections failed validation", e)


def remote_generate(session: AdapterSession, prompt: Prompt, roi: Roi) -> Description:
    session.require("generate")

    reply = session.request(
        wire.GENERATE_REQ,
        lambda msg_id: wire.generate_request(msg_id, prompt.text, roi.source_frame_id, roi.bbox, roi.channels, roi.pixels),
        wire.GENERATE_RESP,
    )
    return wire.description_from_wire(reply.payload.get("text"))


class AdapterDetector:
    def __init__(self, session: AdapterSession):
        self.session = session

    def detect(self, frame: Frame) -> DetectionSet:
        return remote_detect(self.session, frame)


class AdapterBackend:
    """Description backend served by the peer; only the prompt and crop cross the wire."""

    def __init__(self, session: AdapterSession):
        self.session = session

    def generate(self, prompt: Prompt, roi: Roi, detection: Detection, scene_labels: Sequence[str]) -> Description:
        return remote_generate(self.session, prompt, roi)
