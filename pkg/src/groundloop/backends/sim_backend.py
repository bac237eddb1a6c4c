from typing import Sequence

import numpy as np

from ..core.types import Description, Detection, DetectionSet
from ..pipeline.frame import Frame
from ..pipeline.stages import Prompt, Roi
from ..simworld.config import SimWorldConfig
from ..simworld.world import DETECT_STREAM, GENERATE_STREAM, simulate_detector, simulate_generator


class SimDetector:
    """Simulated detector over the ground truth carried by simulator frames."""

    def __init__(self, cfg: SimWorldConfig):
        self.cfg = cfg

    def detect(self, frame: Frame) -> DetectionSet:
        rng = np.random.default_rng([self.cfg.seed, DETECT_STREAM, frame.frame_id])
        return simulate_detector(frame.truth, self.cfg, rng, frame.frame_id)


class SimGenerator:
    """
    Simulated description backend.

    Each description is drawn from a stream keyed by the frame and the box,
    so a detection gets the same words whatever threshold let it through.
    """

    def __init__(self, cfg: SimWorldConfig):
        self.cfg = cfg

    def generate(self, prompt: Prompt, roi: Roi, detection: Detection, scene_labels: Sequence[str]) -> Description:
        box = detection.bbox
        rng = np.random.default_rng([self.cfg.seed, GENERATE_STREAM, roi.source_frame_id, box.x, box.y, box.w, box.h])
        return simulate_generator(detection, self.cfg, rng, scene_labels)
