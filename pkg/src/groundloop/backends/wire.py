"""
Line protocol spoken with external detector and captioner programs.

Every message is one JSON object on one UTF-8 line terminated by ``\\n``.
Pixel payloads travel base64-encoded; ground-truth tags never do.
"""

import base64
import binascii
import json
import string
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from ..core.types import BBox, Description, Detection, DetectionSet, FrameMeta, Grounding, Token
from ..errors import MalformedBackendReplyError, ProtocolError, ValidationError

PROTOCOL_VERSION = 1
MAX_LINE_BYTES = 16 * 1024 * 1024

HELLO = "hello"
DETECT_REQ = "detect_req"
DETECT_RESP = "detect_resp"
GENERATE_REQ = "generate_req"
GENERATE_RESP = "generate_resp"
ERROR = "error"

KINDS = frozenset({HELLO, DETECT_REQ, DETECT_RESP, GENERATE_REQ, GENERATE_RESP, ERROR})
CAPABILITIES = ("detect", "generate")

_TRAILING = string.punctuation


@dataclass(frozen=True)
class WireMessage:
    kind: str
    id: int
    payload: Dict[str, Any] = field(default_factory=dict)

    def encode(self) -> bytes:
        obj = {"kind": self.kind, "id": self.id}
        obj.update(self.payload)
        line = json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8") + b"\n"
        if len(line) > MAX_LINE_BYTES:
            raise ProtocolError(f"{self.kind} message of {len(line)} bytes exceeds the line limit")
        return line

    @classmethod
    def decode(cls, line: bytes) -> "WireMessage":
        if len(line) > MAX_LINE_BYTES:
            raise ProtocolError(f"line of {len(line)} bytes exceeds the line limit")

        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise MalformedBackendReplyError("not a JSON line", e)

        if not isinstance(obj, dict):
            raise MalformedBackendReplyError(f"expected an object, got {type(obj).__name__}")

        kind = obj.pop("kind", None)
        msg_id = obj.pop("id", None)
        if kind not in KINDS:
            raise MalformedBackendReplyError(f"unknown kind {kind!r}")
        if not isinstance(msg_id, int) or isinstance(msg_id, bool):
            raise MalformedBackendReplyError(f"id {msg_id!r} is not an integer")

        return cls(kind, msg_id, obj)


def encode_pixels(pixels: bytes) -> str:
    return base64.b64encode(bytes(pixels)).decode("ascii")


def decode_pixels(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError, AttributeError) as e:
        raise MalformedBackendReplyError("bad base64 pixel payload", e)


# ---
# Payloads

def hello(version: int = PROTOCOL_VERSION, capabilities=CAPABILITIES) -> WireMessage:
    return WireMessage(HELLO, 0, {"version": version, "capabilities": list(capabilities)})


def detect_request(msg_id: int, meta: FrameMeta, pixels: bytes) -> WireMessage:
    return WireMessage(DETECT_REQ, msg_id, {"frame": meta.to_record(), "pixels": encode_pixels(pixels)})


def detect_response(msg_id: int, detections: List[Dict[str, Any]]) -> WireMessage:
    return WireMessage(DETECT_RESP, msg_id, {"detections": detections})


def generate_request(msg_id: int, prompt: str, frame_id: int, bbox: BBox, channels: int, pixels: bytes) -> WireMessage:
    roi = {"frame_id": frame_id, "bbox": bbox.to_record(), "channels": channels}
    return WireMessage(GENERATE_REQ, msg_id, {"prompt": prompt, "roi": roi, "pixels": encode_pixels(pixels)})


def generate_response(msg_id: int, text: str) -> WireMessage:
    return WireMessage(GENERATE_RESP, msg_id, {"text": text})


def error_message(msg_id: int, message: str) -> WireMessage:
    return WireMessage(ERROR, msg_id, {"message": message})


def detections_to_wire(ds: DetectionSet) -> List[Dict[str, Any]]:
    return [d.to_record(with_truth=False) for d in ds.detections]


def detections_from_wire(frame: FrameMeta, items: Any) -> DetectionSet:
    """
    Parses a detection list. Boxes are clamped to the frame; a box with
    nothing inside the frame is malformed. Truth tags are always Unknown.
    """

    if not isinstance(items, list):
        raise MalformedBackendReplyError("'detections' is not a list")

    detections = []
    for i, item in enumerate(items):
        try:
            bbox = BBox.from_record(item["bbox"])
            label = item["label"]
            confidence = float(item["confidence"])
        except (KeyError, TypeError, ValueError, ValidationError) as e:
            raise MalformedBackendReplyError(f"detection {i} is malformed", e)

        if not isinstance(label, str):
            raise MalformedBackendReplyError(f"detection {i} label is not a string")

        clamped = bbox.clamped(frame.width_px, frame.height_px)
        if clamped is None:
            raise MalformedBackendReplyError(f"detection {i} box {bbox} lies outside the frame")

        detections.append(Detection(clamped, label, confidence))

    return DetectionSet(frame.frame_id, tuple(detections))


def tokenize(text: Any) -> Tuple[Token, ...]:
    """
    Whitespace tokens with trailing punctuation stripped, all tagged Unknown.

    Empty text, text that tokenizes to nothing, and text containing a line
    break are malformed.
    """

    if not isinstance(text, str):
        raise MalformedBackendReplyError("description text is not a string")
    if "\n" in text or "\r" in text:
        raise MalformedBackendReplyError("description text contains a line break")

    words = [w.rstrip(_TRAILING) for w in text.split()]
    tokens = tuple(Token(w, Grounding.UNKNOWN) for w in words if w)
    if not tokens:
        raise MalformedBackendReplyError("empty description text")

    return tokens


def description_from_wire(text: Any) -> Description:
    return Description(0, tokenize(text))
