"""Synthetic frames, detector and description generator."""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.types import BBox, Description, Detection, DetectionSet, FrameMeta, Grounding, Token, TruthTag
from ..core.vocab import label_words, load_whitelist
from ..pipeline.frame import Frame
from .config import SimWorldConfig

logger = logging.getLogger(__name__)

MIN_BOX_PX = 8
# Stream ids mixed into the seed so each random stream is independent
FRAME_STREAM = 0
DETECT_STREAM = 1
GENERATE_STREAM = 2

# Used only when every vocabulary word is in the scene
FALLBACK_WORD = "thing"


@dataclass(frozen=True)
class TruthObject:
    bbox: BBox
    label: str


def _random_box(rng: np.random.Generator, width: int, height: int) -> BBox:
    w = int(rng.integers(MIN_BOX_PX, max(MIN_BOX_PX, width // 3) + 1))
    h = int(rng.integers(MIN_BOX_PX, max(MIN_BOX_PX, height // 3) + 1))
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return BBox(x, y, w, h)


@lru_cache(maxsize=4)
def _gradient(width: int, height: int, channels: int) -> np.ndarray:
    ys = np.arange(height, dtype=np.int64)[:, None, None]
    xs = np.arange(width, dtype=np.int64)[None, :, None]
    cs = np.arange(channels, dtype=np.int64)[None, None, :]
    return ((xs * (1 + cs) + ys * (3 - cs) + cs * 85) % 256).astype(np.uint8)


def render_pixels(seed: int, frame_id: int, width: int, height: int, channels: int = 3) -> bytes:
    """Procedural gradient; a pure function of its arguments."""

    offset = np.uint8((seed * 131 + frame_id * 17) % 256)
    # uint8 addition wraps modulo 256
    return (_gradient(width, height, channels) + offset).tobytes()


def gen_frame(
    rng: np.random.Generator,
    cfg: SimWorldConfig,
    frame_id: int,
) -> Tuple[FrameMeta, List[TruthObject], bytes]:
    width, height = cfg.frame_size
    labels = cfg.labels()

    lo, hi = cfg.objects_per_frame
    count = int(rng.integers(lo, hi + 1))

    truth = [
        TruthObject(_random_box(rng, width, height), labels[int(rng.integers(len(labels)))])
        for _ in range(count)
    ]

    meta = FrameMeta(frame_id, width, height, 3, timestamp_us=frame_id * 33333)
    return meta, truth, render_pixels(cfg.seed, frame_id, width, height)


def simulate_detector(
    truth: Sequence[TruthObject],
    cfg: SimWorldConfig,
    rng: np.random.Generator,
    frame_id: int = 0,
) -> DetectionSet:
    """
    True objects are found with ``detect_prob`` and Beta(tp_conf) confidence;
    Poisson(fp_rate) phantom boxes get Beta(fp_conf) confidence. Output order is shuffled.
    """

    width, height = cfg.frame_size
    labels = cfg.labels()
    detections = []

    for obj in truth:
        if rng.random() < cfg.detect_prob:
            detections.append(Detection(obj.bbox, obj.label, float(rng.beta(*cfg.tp_conf)), TruthTag.TRUE_POSITIVE))

    for _ in range(int(rng.poisson(cfg.fp_rate))):
        bbox = _random_box(rng, width, height)
        label = labels[int(rng.integers(len(labels)))]
        detections.append(Detection(bbox, label, float(rng.beta(*cfg.fp_conf)), TruthTag.FALSE_POSITIVE))

    order = rng.permutation(len(detections))
    return DetectionSet(frame_id, tuple(detections[i] for i in order))


@lru_cache(maxsize=8)
def _vocabulary_words(labels: Tuple[str, ...]) -> Tuple[str, ...]:
    return tuple(sorted(label_words(labels)))


@lru_cache(maxsize=1024)
def _stray_words(labels: Tuple[str, ...], scene_labels: Tuple[str, ...], whitelist: FrozenSet[str]) -> Tuple[str, ...]:
    in_scene = label_words(scene_labels)
    pool = tuple(w for w in _vocabulary_words(labels) if w not in in_scene and w not in whitelist)
    return pool or (FALLBACK_WORD,)


def simulate_generator(
    detection: Detection,
    cfg: SimWorldConfig,
    rng: np.random.Generator,
    scene_labels: Optional[Sequence[str]] = None,
) -> Description:
    """
    Describes a detection with oracle-tagged tokens.

    A true positive names its label (Grounded) inside template scaffolding
    and, with probability ``gen_base_halluc``, also inserts
    ``free_form_tokens`` words absent from the scene. A false positive
    narrates an object that is not there: all its content words are absent
    from the scene.
    """

    whitelist = load_whitelist()
    scaffold_pool = sorted(whitelist)
    scene = tuple(scene_labels) if scene_labels is not None else (detection.label,)
    stray = _stray_words(cfg.labels(), scene, whitelist)

    lo, hi = cfg.tokens_per_description
    n_tokens = int(rng.integers(lo, hi + 1))

    label_tokens = detection.label.split()
    if detection.truth_tag is TruthTag.FALSE_POSITIVE:
        content = [Token(stray[int(rng.integers(len(stray)))], Grounding.UNGROUNDED) for _ in label_tokens]
    else:
        content = [Token(w, Grounding.GROUNDED) for w in label_tokens]
        if rng.random() < cfg.gen_base_halluc:
            extra = [Token(stray[int(rng.integers(len(stray)))], Grounding.UNGROUNDED) for _ in range(cfg.free_form_tokens)]
            at = int(rng.integers(len(content) + 1))
            content[at:at] = extra

    n_scaffold = max(1, n_tokens - len(content))
    scaffold = [Token(scaffold_pool[int(rng.integers(len(scaffold_pool)))], Grounding.TEMPLATE) for _ in range(n_scaffold)]

    # Content stays contiguous inside the scaffold
    split = int(rng.integers(n_scaffold + 1))
    tokens = scaffold[:split] + content + scaffold[split:]
    return Description(0, tuple(tokens))


class SimFrameSource:
    """Iterable of ``n_frames`` synthetic frames; frame ``i`` depends only on (seed, i)."""

    def __init__(self, cfg: SimWorldConfig, n_frames: int, start: int = 0):
        self.cfg = cfg
        self.n_frames = n_frames
        self.start = start

    def __len__(self) -> int:
        return self.n_frames

    def frame(self, frame_id: int) -> Frame:
        rng = np.random.default_rng([self.cfg.seed, FRAME_STREAM, frame_id])
        meta, truth, pixels = gen_frame(rng, self.cfg, frame_id)
        return Frame(meta, pixels, tuple(truth))

    def __iter__(self) -> Iterator[Frame]:
        for frame_id in range(self.start, self.start + self.n_frames):
            yield self.frame(frame_id)
