"""Domain values shared by every stage of the loop.

All types are frozen dataclasses: once built they can be handed between the
detection and generation stages without copying or locking. Each type has a
``to_record``/``from_record`` pair feeding the flat line codec in
``groundloop.utils.converters``.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Collection, Dict, Iterable, Optional, Tuple

from ..errors import (
    BoxOutOfBoundsError,
    ConfidenceOutOfRangeError,
    EmptyLabelError,
    FrameMismatchError,
    ValidationError,
)
from ..utils.converters import decode_record, encode_record

SCENE_PREFIX = "In the scene, "
EMPTY_SCENE = "In the scene, nothing is detected."


class TruthTag(str, enum.Enum):
    TRUE_POSITIVE = "TruePositive"
    FALSE_POSITIVE = "FalsePositive"
    UNKNOWN = "Unknown"


class Grounding(str, enum.Enum):
    GROUNDED = "Grounded"
    UNGROUNDED = "Ungrounded"
    TEMPLATE = "Template"
    # Adapter replies carry this until match_token classifies them
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class FrameMeta:
    frame_id: int
    width_px: int
    height_px: int
    channels: int = 3
    timestamp_us: int = 0

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1 or self.channels < 1:
            raise ValidationError(
                f"Frame {self.frame_id} has degenerate geometry "
                f"{self.width_px}x{self.height_px}x{self.channels}"
            )
        if self.timestamp_us < 0:
            raise ValidationError(f"Frame {self.frame_id} has negative timestamp {self.timestamp_us}")

    @property
    def n_bytes(self) -> int:
        return self.width_px * self.height_px * self.channels

    def to_record(self) -> Dict[str, Any]:
        return {
            "frame_id": self.frame_id,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "channels": self.channels,
            "timestamp_us": self.timestamp_us,
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "FrameMeta":
        return cls(
            frame_id=int(rec["frame_id"]),
            width_px=int(rec["width_px"]),
            height_px=int(rec["height_px"]),
            channels=int(rec.get("channels", 3)),
            timestamp_us=int(rec.get("timestamp_us", 0)),
        )


@dataclass(frozen=True)
class BBox:
    """Pixel box, top-left origin."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValidationError(f"Box origin ({self.x}, {self.y}) is negative")
        if self.w < 1 or self.h < 1:
            raise ValidationError(f"Box size {self.w}x{self.h} is not positive")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def iou(self, other: "BBox") -> float:
        ix = max(0, min(self.x2, other.x2) - max(self.x, other.x))
        iy = max(0, min(self.y2, other.y2) - max(self.y, other.y))
        inter = ix * iy
        union = self.area + other.area - inter
        return inter / union if union > 0 else 0.0

    def clamped(self, width: int, height: int) -> Optional["BBox"]:
        """Intersection with the frame, or None when nothing is left."""

        x2 = min(self.x2, width)
        y2 = min(self.y2, height)
        if x2 <= self.x or y2 <= self.y:
            return None

        return BBox(self.x, self.y, x2 - self.x, y2 - self.y)

    def fits(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    def to_record(self) -> Dict[str, Any]:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "BBox":
        return cls(int(rec["x"]), int(rec["y"]), int(rec["w"]), int(rec["h"]))


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    label: str
    confidence: float
    truth_tag: TruthTag = TruthTag.UNKNOWN

    def to_record(self, with_truth: bool = True) -> Dict[str, Any]:
        rec = {"bbox": self.bbox.to_record(), "label": self.label, "confidence": self.confidence}
        if with_truth:
            rec["truth_tag"] = self.truth_tag
        return rec

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "Detection":
        return cls(
            bbox=BBox.from_record(rec["bbox"]),
            label=str(rec["label"]),
            confidence=float(rec["confidence"]),
            truth_tag=TruthTag(rec.get("truth_tag", TruthTag.UNKNOWN.value)),
        )


@dataclass(frozen=True)
class DetectionSet:
    frame_id: int
    detections: Tuple[Detection, ...] = ()

    def __post_init__(self):
        # Lists are accepted for convenience and frozen here
        object.__setattr__(self, "detections", tuple(self.detections))

    @property
    def n(self) -> int:
        return len(self.detections)

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(d.label for d in self.detections)

    def to_record(self, with_truth: bool = True) -> Dict[str, Any]:
        return {
            "frame_id": self.frame_id,
            "detections": [d.to_record(with_truth) for d in self.detections],
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "DetectionSet":
        return cls(
            frame_id=int(rec["frame_id"]),
            detections=tuple(Detection.from_record(d) for d in rec.get("detections", [])),
        )


@dataclass(frozen=True)
class Token:
    text: str
    grounding: Grounding

    def __post_init__(self):
        if not self.text:
            raise ValidationError("Token text is empty")

    @property
    def is_content(self) -> bool:
        return self.grounding is not Grounding.TEMPLATE

    def to_record(self) -> Dict[str, Any]:
        return {"text": self.text, "grounding": self.grounding}

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "Token":
        return cls(text=str(rec["text"]), grounding=Grounding(rec["grounding"]))


@dataclass(frozen=True)
class Description:
    source_detection_index: int
    tokens: Tuple[Token, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValidationError(f"Description for detection {self.source_detection_index} has no tokens")

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)

    def with_index(self, index: int) -> "Description":
        return Description(index, self.tokens)

    def to_record(self) -> Dict[str, Any]:
        return {
            "source_detection_index": self.source_detection_index,
            "tokens": [t.to_record() for t in self.tokens],
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "Description":
        return cls(
            source_detection_index=int(rec["source_detection_index"]),
            tokens=tuple(Token.from_record(t) for t in rec["tokens"]),
        )


@dataclass(frozen=True)
class SceneSummary:
    clauses: Tuple[str, ...] = ()
    relations: Tuple[str, ...] = ()
    rendered: str = EMPTY_SCENE
    prefix: str = field(default=SCENE_PREFIX)

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        object.__setattr__(self, "relations", tuple(self.relations))
        if self.prefix != SCENE_PREFIX or not self.rendered.startswith(SCENE_PREFIX):
            raise ValidationError(f"Scene summary must start with {SCENE_PREFIX!r}")

    def to_record(self) -> Dict[str, Any]:
        return {
            "prefix": self.prefix,
            "clauses": list(self.clauses),
            "relations": list(self.relations),
            "rendered": self.rendered,
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "SceneSummary":
        return cls(
            clauses=tuple(rec.get("clauses", [])),
            relations=tuple(rec.get("relations", [])),
            rendered=rec["rendered"],
            prefix=rec.get("prefix", SCENE_PREFIX),
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_detection_set(
    ds: DetectionSet,
    meta: FrameMeta,
    vocabulary: Optional[Collection[str]] = None,
) -> DetectionSet:
    """
    Returns ``ds`` unchanged when every detection satisfies its invariants.

    :param vocabulary: (Optional) Closed label vocabulary; when given, labels
                       outside it are rejected like empty labels.
    :raises ConfidenceOutOfRangeError, BoxOutOfBoundsError, EmptyLabelError:
    """

    if ds.frame_id != meta.frame_id:
        raise FrameMismatchError(meta.frame_id, ds.frame_id)

    for i, det in enumerate(ds.detections):

        if not det.label or (vocabulary is not None and det.label not in vocabulary):
            raise EmptyLabelError(i, det.label)

        # NaN fails both comparisons
        if not (0.0 <= det.confidence <= 1.0) or math.isnan(det.confidence):
            raise ConfidenceOutOfRangeError(i, det.confidence)

        if not det.bbox.fits(meta.width_px, meta.height_px):
            raise BoxOutOfBoundsError(
                i, f"{det.bbox} exceeds {meta.width_px}x{meta.height_px}"
            )

    return ds


# ---------------------------------------------------------------------------
# Line codec
# ---------------------------------------------------------------------------

_RECORD_TYPES = {
    "FrameMeta": FrameMeta,
    "BBox": BBox,
    "Detection": Detection,
    "DetectionSet": DetectionSet,
    "Token": Token,
    "Description": Description,
    "SceneSummary": SceneSummary,
}


def register_record_type(cls) -> Any:
    """Makes ``cls`` decodable by :func:`decode`; returns it so it works as a decorator."""

    _RECORD_TYPES[cls.__name__] = cls
    return cls


def encode(value: Any) -> str:
    """One flat-record line (no terminator) for any core value."""

    rec = {"type": type(value).__name__}
    rec.update(value.to_record())
    return encode_record(rec)


def decode(line: str) -> Any:
    rec = decode_record(line)
    type_name = rec.pop("type", None)
    cls = _RECORD_TYPES.get(type_name)
    if cls is None:
        raise ValidationError(f"Unknown record type {type_name!r}")

    return cls.from_record(rec)


def encode_lines(values: Iterable[Any]) -> str:
    return "".join(f"{encode(v)}\n" for v in values)
