from .section import ConfigSection
from .var import ConfigVar
from .types import (
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
    TruthTag,
    decode,
    encode,
    encode_lines,
    register_record_type,
    validate_detection_set,
)
from .vocab import label_words, load_vocabulary, load_whitelist
from ..errors import InvalidConfigValueError

__all__ = [
    "ConfigSection",
    "ConfigVar",
    "InvalidConfigValueError",
    "EMPTY_SCENE",
    "SCENE_PREFIX",
    "BBox",
    "Description",
    "Detection",
    "DetectionSet",
    "FrameMeta",
    "Grounding",
    "SceneSummary",
    "Token",
    "TruthTag",
    "decode",
    "encode",
    "encode_lines",
    "register_record_type",
    "validate_detection_set",
    "label_words",
    "load_vocabulary",
    "load_whitelist",
]
