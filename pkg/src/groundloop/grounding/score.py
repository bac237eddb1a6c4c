import enum
import logging
from dataclasses import dataclass
from typing import AbstractSet, Any, Collection, Dict, FrozenSet, Optional, Sequence, Tuple

from ..core.section import ConfigSection
from ..core.types import Description, DetectionSet, Grounding, TruthTag, register_record_type
from ..core.var import ConfigVar
from ..core.vocab import label_words, load_whitelist
from ..errors import (
    ConfigError,
    EmptySetError,
    UnknownTagInOracleModeError,
    UnknownTruthTagsError,
)

logger = logging.getLogger(__name__)


class GroundingMode(str, enum.Enum):
    TOKEN_LEVEL = "token"
    DESCRIPTION_LEVEL = "description"
    ORACLE = "oracle"


class GroundingConfig(ConfigSection):

    class Config:
        key_prefix = "grounding."

    mode: GroundingMode = ConfigVar(default=GroundingMode.TOKEN_LEVEL, help="token | description | oracle")
    window: int = ConfigVar(default=30, help="frames in the rate window")
    vocabulary: Optional[str] = ConfigVar(default=None, help="class list file (default: COCO labels)")
    whitelist: Optional[str] = ConfigVar(default=None, help="template-word file (default: packaged list)")

    def validate(self) -> None:
        if self.window < 1:
            raise ConfigError(self.key_of("window"), f"must be at least 1, got {self.window}")


@register_record_type
@dataclass(frozen=True)
class GroundingReport:
    """
    Grounding of one frame's descriptions.

    In description-level mode ``grounded_tokens``/``scored_tokens`` count
    descriptions, so ``gamma == grounded_tokens / scored_tokens`` holds in
    every mode.
    """

    frame_id: int
    gamma: float
    grounded_tokens: int
    scored_tokens: int
    hallucinated_descriptions: Tuple[int, ...]
    h_frame: float
    mode: GroundingMode = GroundingMode.TOKEN_LEVEL
    h_descriptions: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hallucinated_descriptions", tuple(self.hallucinated_descriptions))

    def to_record(self) -> Dict[str, Any]:
        return {
            "frame_id": self.frame_id,
            "gamma": self.gamma,
            "grounded_tokens": self.grounded_tokens,
            "scored_tokens": self.scored_tokens,
            "hallucinated_descriptions": list(self.hallucinated_descriptions),
            "h_frame": self.h_frame,
            "mode": self.mode,
            "h_descriptions": self.h_descriptions,
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "GroundingReport":
        return cls(
            frame_id=int(rec["frame_id"]),
            gamma=float(rec["gamma"]),
            grounded_tokens=int(rec["grounded_tokens"]),
            scored_tokens=int(rec["scored_tokens"]),
            hallucinated_descriptions=tuple(int(i) for i in rec.get("hallucinated_descriptions", [])),
            h_frame=float(rec["h_frame"]),
            mode=GroundingMode(rec.get("mode", GroundingMode.TOKEN_LEVEL.value)),
            h_descriptions=float(rec.get("h_descriptions", 0.0)),
        )


def _classify(low: str, words: AbstractSet[str], whitelist: AbstractSet[str]) -> Grounding:
    if low in whitelist:
        return Grounding.TEMPLATE
    if low in words:
        return Grounding.GROUNDED

    return Grounding.UNGROUNDED


def match_token(token_text: str, allowed_labels: Collection[str], whitelist: Optional[AbstractSet[str]] = None) -> Grounding:
    """
    Classifies one token against the filtered labels.

    Template when the lower-cased text is whitelisted; Grounded when it equals
    an allowed label or one word of a multi-word label; Ungrounded otherwise.
    """

    if whitelist is None:
        whitelist = load_whitelist()

    return _classify(token_text.lower(), label_words(allowed_labels), whitelist)


def _token_tags(
    descriptions: Sequence[Description],
    words: FrozenSet[str],
    whitelist: AbstractSet[str],
    mode: GroundingMode,
):
    for d_idx, desc in enumerate(descriptions):
        tags = []
        for t_idx, token in enumerate(desc.tokens):
            if mode is GroundingMode.ORACLE:
                if token.grounding is Grounding.UNKNOWN:
                    raise UnknownTagInOracleModeError(d_idx, t_idx)
                tags.append(token.grounding)
            else:
                tags.append(_classify(token.text.lower(), words, whitelist))
        yield tags


def grounding_score(
    descriptions: Sequence[Description],
    allowed_labels: Collection[str],
    mode: GroundingMode = GroundingMode.TOKEN_LEVEL,
    whitelist: Optional[AbstractSet[str]] = None,
    frame_id: int = 0,
) -> GroundingReport:
    """
    Scores how much of the descriptions is supported by ``allowed_labels``.

    Template tokens never count. With no descriptions, or no content tokens,
    the frame is vacuously grounded (gamma = 1, no hallucinated descriptions).
    """

    if whitelist is None:
        whitelist = load_whitelist()
    words = label_words(allowed_labels)

    grounded = 0
    scored = 0
    clean_descriptions = 0
    hallucinated = []

    for d_idx, tags in enumerate(_token_tags(descriptions, words, whitelist, mode)):
        content = [t for t in tags if t is not Grounding.TEMPLATE]
        n_grounded = sum(1 for t in content if t is Grounding.GROUNDED)

        grounded += n_grounded
        scored += len(content)

        if n_grounded < len(content):
            hallucinated.append(d_idx)
        else:
            clean_descriptions += 1

    if mode is GroundingMode.DESCRIPTION_LEVEL and scored > 0:
        grounded, scored = clean_descriptions, len(descriptions)

    if scored == 0:
        gamma = 1.0
        hallucinated = []
    else:
        gamma = grounded / scored

    h_desc = len(hallucinated) / len(descriptions) if descriptions else 0.0

    return GroundingReport(
        frame_id=frame_id,
        gamma=gamma,
        grounded_tokens=grounded,
        scored_tokens=scored,
        hallucinated_descriptions=tuple(hallucinated),
        h_frame=1.0 - gamma,
        mode=mode,
        h_descriptions=h_desc,
    )


def epsilon_detect(ds: DetectionSet) -> float:
    """Fraction of detections tagged FalsePositive; needs ground-truth tags."""

    if ds.n == 0:
        raise EmptySetError()

    unknown = sum(1 for d in ds.detections if d.truth_tag is TruthTag.UNKNOWN)
    if unknown:
        raise UnknownTruthTagsError(unknown)

    false = sum(1 for d in ds.detections if d.truth_tag is TruthTag.FALSE_POSITIVE)
    return false / ds.n
