"""Per-frame stages: filter, crop, prompt, generate, relate and assemble."""

import enum
import logging
from dataclasses import dataclass
from typing import AbstractSet, Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.types import (
    EMPTY_SCENE,
    SCENE_PREFIX,
    BBox,
    Description,
    Detection,
    DetectionSet,
    FrameMeta,
    Grounding,
    SceneSummary,
    Token,
    register_record_type,
)
from ..core.vocab import load_whitelist
from ..errors import (
    AlignmentMismatchError,
    EmptyLabelError,
    GeometryMismatchError,
    MalformedBackendReplyError,
    ValidationError,
    ZeroAreaRoiError,
)
from ..grounding.score import match_token

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE = "Describe the {label} in this scene based on visual evidence."
OVERLAP_IOU = 0.1

PixelBuffer = Union[bytes, bytearray, memoryview, np.ndarray]


@dataclass(frozen=True)
class Roi:
    source_frame_id: int
    bbox: BBox
    pixels: bytes
    channels: int = 3

    def __post_init__(self):
        expected = self.bbox.area * self.channels
        if len(self.pixels) != expected:
            raise GeometryMismatchError(expected, len(self.pixels))

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.bbox.h, self.bbox.w, self.channels)


@dataclass(frozen=True)
class Prompt:
    text: str
    label: str


class Relation(str, enum.Enum):
    LEFT_OF = "LeftOf"
    RIGHT_OF = "RightOf"
    ABOVE = "Above"
    BELOW = "Below"
    OVERLAPPING = "Overlapping"

    @property
    def phrase(self) -> str:
        return _PHRASES[self]


_PHRASES = {
    Relation.LEFT_OF: "left of",
    Relation.RIGHT_OF: "right of",
    Relation.ABOVE: "above",
    Relation.BELOW: "below",
    Relation.OVERLAPPING: "overlapping",
}


@register_record_type
@dataclass(frozen=True)
class SpatialRelation:
    subject_index: int
    object_index: int
    relation: Relation

    def __post_init__(self):
        if self.subject_index == self.object_index or min(self.subject_index, self.object_index) < 0:
            raise ValidationError(f"Invalid relation pair ({self.subject_index}, {self.object_index})")

    def render(self, filtered: DetectionSet) -> str:
        subject = filtered.detections[self.subject_index].label
        obj = filtered.detections[self.object_index].label
        return f"the {subject} is {self.relation.phrase} the {obj}"

    def to_record(self) -> Dict[str, Any]:
        return {"subject_index": self.subject_index, "object_index": self.object_index, "relation": self.relation}

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "SpatialRelation":
        return cls(int(rec["subject_index"]), int(rec["object_index"]), Relation(rec["relation"]))


def filter_detections(ds: DetectionSet, tau: float) -> DetectionSet:
    """Keeps detections with confidence >= tau, in order."""

    return DetectionSet(ds.frame_id, tuple(d for d in ds.detections if d.confidence >= tau))


def crop_roi(frame_pixels: PixelBuffer, meta: FrameMeta, bbox: BBox) -> Roi:
    """
    Cuts the box out of a row-major ``height x width x channels`` frame.

    Boxes reaching past the frame edge are clamped first; a box with nothing
    left inside the frame raises ``ZeroAreaRoiError``.
    """

    if isinstance(frame_pixels, np.ndarray):
        buf = frame_pixels.reshape(-1)
    else:
        buf = np.frombuffer(frame_pixels, dtype=np.uint8)
    if buf.size != meta.n_bytes:
        raise GeometryMismatchError(meta.n_bytes, buf.size)

    clamped = bbox.clamped(meta.width_px, meta.height_px)
    if clamped is None:
        raise ZeroAreaRoiError(bbox)

    image = buf.reshape(meta.height_px, meta.width_px, meta.channels)
    window = image[clamped.y:clamped.y2, clamped.x:clamped.x2, :]

    return Roi(meta.frame_id, clamped, window.tobytes(), meta.channels)


def build_prompt(label: str) -> Prompt:
    if not label or not label.strip():
        raise EmptyLabelError(label=label)

    return Prompt(PROMPT_TEMPLATE.format(label=label), label)


def generate(
    backend: Any,
    prompt: Prompt,
    roi: Roi,
    detection: Detection,
    scene_labels: Sequence[str],
    index: int = 0,
    whitelist: Optional[AbstractSet[str]] = None,
) -> Description:
    """
    Asks ``backend`` for a description and stamps it with ``index``.

    ``detection`` and ``scene_labels`` are context for simulated backends;
    adapter backends only ever send the prompt and the crop. Tokens the
    backend left Unknown are tagged with ``match_token`` against
    ``scene_labels``; tags the backend supplied are kept.
    """

    description = backend.generate(prompt, roi, detection, tuple(scene_labels))
    if not isinstance(description, Description):
        raise MalformedBackendReplyError(f"backend returned {type(description).__name__}, expected Description")

    if any(t.grounding is Grounding.UNKNOWN for t in description.tokens):
        if whitelist is None:
            whitelist = load_whitelist()
        tokens = tuple(
            Token(t.text, match_token(t.text, scene_labels, whitelist)) if t.grounding is Grounding.UNKNOWN else t
            for t in description.tokens
        )
        description = Description(description.source_detection_index, tokens)

    return description.with_index(index)


def spatial_relations(filtered: DetectionSet) -> List[SpatialRelation]:
    """
    Relates neighbours in left-to-right order of box centres.

    Overlapping when IoU > 0.1, otherwise the axis with the larger centre
    displacement decides.
    """

    order = sorted(range(filtered.n), key=lambda i: (filtered.detections[i].bbox.center[0], i))
    relations = []

    for a, b in zip(order, order[1:]):
        box_a = filtered.detections[a].bbox
        box_b = filtered.detections[b].bbox

        if box_a.iou(box_b) > OVERLAP_IOU:
            relations.append(SpatialRelation(a, b, Relation.OVERLAPPING))
            continue

        (ax, ay), (bx, by) = box_a.center, box_b.center
        dx, dy = bx - ax, by - ay

        if abs(dx) >= abs(dy):
            # Sorted by x, so dx >= 0
            relations.append(SpatialRelation(a, b, Relation.LEFT_OF))
        elif dy > 0:
            relations.append(SpatialRelation(a, b, Relation.ABOVE))
        else:
            relations.append(SpatialRelation(a, b, Relation.BELOW))

    return relations


def assemble_scene(
    descriptions: Sequence[Description],
    relations: Sequence[SpatialRelation],
    filtered: DetectionSet,
) -> SceneSummary:
    if len(descriptions) != filtered.n:
        raise AlignmentMismatchError(len(descriptions), filtered.n)

    if not descriptions:
        return SceneSummary(rendered=EMPTY_SCENE)

    clauses = tuple(d.text for d in descriptions)
    rendered_relations = tuple(r.render(filtered) for r in relations)
    rendered = SCENE_PREFIX + "; ".join(clauses + rendered_relations) + "."

    return SceneSummary(clauses=clauses, relations=rendered_relations, rendered=rendered)
