from dataclasses import dataclass
from typing import Tuple

from ..errors import OutOfRangeError, ValidationError


@dataclass(frozen=True)
class RateEstimator:
    """
    Moving average of per-frame hallucination rates over the last ``window_len`` frames.

    An estimator that has seen nothing reads 0.0.
    """

    window_len: int
    buffer: Tuple[float, ...] = ()
    h_t: float = 0.0

    def __post_init__(self):
        if self.window_len < 1:
            raise ValidationError(f"window_len must be at least 1, got {self.window_len}")

    @property
    def filled(self) -> bool:
        return len(self.buffer) == self.window_len


def update_rate(est: RateEstimator, h_frame: float) -> RateEstimator:
    if not (0.0 <= h_frame <= 1.0):
        raise OutOfRangeError(h_frame)

    buffer = (est.buffer + (h_frame,))[-est.window_len:]
    return RateEstimator(est.window_len, buffer, sum(buffer) / len(buffer))
