from .rate import RateEstimator, update_rate
from .score import (
    GroundingConfig,
    GroundingMode,
    GroundingReport,
    epsilon_detect,
    grounding_score,
    match_token,
)

__all__ = [
    "RateEstimator",
    "update_rate",
    "GroundingConfig",
    "GroundingMode",
    "GroundingReport",
    "epsilon_detect",
    "grounding_score",
    "match_token",
]
