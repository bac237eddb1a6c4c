from typing import Protocol, Sequence, runtime_checkable

from ..core.types import Description, Detection, DetectionSet
from ..pipeline.frame import Frame
from ..pipeline.stages import Prompt, Roi


@runtime_checkable
class Detector(Protocol):
    """Produces the detection set of a frame."""

    def detect(self, frame: Frame) -> DetectionSet:
        ...


@runtime_checkable
class DescriptionBackend(Protocol):
    """
    Describes one region.

    ``detection`` and ``scene_labels`` are only context: real backends must
    not rely on them (ground truth never leaves the process).
    """

    def generate(self, prompt: Prompt, roi: Roi, detection: Detection, scene_labels: Sequence[str]) -> Description:
        ...
