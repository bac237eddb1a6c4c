"""
Reference peer for the adapter protocol.

Run as ``python -m groundloop.backends.mock_peer`` to serve on stdin/stdout,
or hand :func:`serve` any pair of binary streams (tests use a socket pair).
"""

import argparse
import json
import logging
import queue
import sys
import threading
from dataclasses import dataclass
from typing import Any, BinaryIO, Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from . import wire

logger = logging.getLogger(__name__)

DEFAULT_DETECTIONS = (
    {"bbox": {"x": 10, "y": 10, "w": 40, "h": 30}, "label": "dog", "confidence": 0.9},
    {"bbox": {"x": 60, "y": 20, "w": 30, "h": 30}, "label": "car", "confidence": 0.7},
)
DEFAULT_TEXT = "a dog sitting"


@dataclass
class PeerBehaviour:
    version: int = wire.PROTOCOL_VERSION
    capabilities: Sequence[str] = wire.CAPABILITIES
    # Ids never answered
    drop_ids: FrozenSet[int] = frozenset()
    # Replies are released in shuffled batches of this size (1 = in order)
    permute_batch: int = 1
    # A partial batch is flushed after this much idle time
    flush_ms: float = 50.0
    seed: int = 0
    detections: Sequence[Dict[str, Any]] = DEFAULT_DETECTIONS
    text: str = DEFAULT_TEXT
    # Never answer the hello
    silent: bool = False
    # Answer generate requests with their own prompt
    echo: bool = False


def reply_to(msg: wire.WireMessage, behaviour: PeerBehaviour) -> Optional[wire.WireMessage]:
    if msg.kind == wire.DETECT_REQ:
        if "detect" not in behaviour.capabilities:
            return wire.error_message(msg.id, "detect not supported")
        return wire.detect_response(msg.id, list(behaviour.detections))

    if msg.kind == wire.GENERATE_REQ:
        if "generate" not in behaviour.capabilities:
            return wire.error_message(msg.id, "generate not supported")
        text = msg.payload.get("prompt", "") if behaviour.echo else behaviour.text
        return wire.generate_response(msg.id, text)

    return wire.error_message(msg.id, f"unexpected {msg.kind}")


def serve(reader: BinaryIO, writer: BinaryIO, behaviour: Optional[PeerBehaviour] = None) -> None:
    """Answers requests until the reader hits end of stream."""

    behaviour = behaviour or PeerBehaviour()
    rng = np.random.default_rng(behaviour.seed)
    inbox: "queue.Queue[Optional[wire.WireMessage]]" = queue.Queue()

    def write(msg: wire.WireMessage):
        writer.write(msg.encode())
        writer.flush()

    def read():
        try:
            for line in iter(lambda: reader.readline(wire.MAX_LINE_BYTES + 1), b""):
                try:
                    inbox.put(wire.WireMessage.decode(line))
                except Exception as e:
                    logger.warning(f"mock peer ignoring line: {e}")
        except (OSError, ValueError):
            pass
        inbox.put(None)

    threading.Thread(target=read, name="mock-peer-reader", daemon=True).start()

    batch: List[wire.WireMessage] = []

    def flush():
        for i in rng.permutation(len(batch)):
            write(batch[i])
        batch.clear()

    try:
        while True:
            try:
                msg = inbox.get(timeout=behaviour.flush_ms / 1000.0)
            except queue.Empty:
                if batch:
                    flush()
                continue

            if msg is None:
                break

            if msg.kind == wire.HELLO:
                if not behaviour.silent:
                    write(wire.hello(behaviour.version, behaviour.capabilities))
                continue

            if msg.id in behaviour.drop_ids:
                continue

            reply = reply_to(msg, behaviour)
            if behaviour.permute_batch <= 1:
                write(reply)
                continue

            batch.append(reply)
            if len(batch) >= behaviour.permute_batch:
                flush()

        if batch:
            flush()
    except (OSError, ValueError):
        # Client went away
        pass


def serve_in_thread(reader: BinaryIO, writer: BinaryIO, behaviour: Optional[PeerBehaviour] = None) -> threading.Thread:
    thread = threading.Thread(target=serve, args=(reader, writer, behaviour), name="mock-peer", daemon=True)
    thread.start()
    return thread


def _parse_args(argv: Optional[Sequence[str]] = None) -> PeerBehaviour:
    parser = argparse.ArgumentParser(prog="mock_peer", description="Reference peer for the groundloop adapter protocol.")
    parser.add_argument("--version", type=int, default=wire.PROTOCOL_VERSION, help="protocol version to announce")
    parser.add_argument("--capabilities", default=",".join(wire.CAPABILITIES), help="comma-separated capabilities")
    parser.add_argument("--drop-ids", default="", help="comma-separated request ids to never answer")
    parser.add_argument("--permute-batch", type=int, default=1, help="shuffle replies in batches of this size")
    parser.add_argument("--flush-ms", type=float, default=50.0, help="idle time before a partial batch is sent")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--detections", default=None, help="JSON list returned for every detect request")
    parser.add_argument("--text", default=DEFAULT_TEXT, help="text returned for every generate request")
    parser.add_argument("--silent", action="store_true", help="never answer the hello")
    parser.add_argument("--echo", action="store_true", help="answer generate requests with their prompt")
    args = parser.parse_args(argv)

    return PeerBehaviour(
        version=args.version,
        capabilities=tuple(c for c in args.capabilities.split(",") if c),
        drop_ids=frozenset(int(i) for i in args.drop_ids.split(",") if i),
        permute_batch=args.permute_batch,
        flush_ms=args.flush_ms,
        seed=args.seed,
        detections=json.loads(args.detections) if args.detections else DEFAULT_DETECTIONS,
        text=args.text,
        silent=args.silent,
        echo=args.echo,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    behaviour = _parse_args(argv)
    serve(sys.stdin.buffer, sys.stdout.buffer, behaviour)
    return 0


if __name__ == "__main__":
    sys.exit(main())
