import enum
import math
from dataclasses import dataclass
from typing import Optional

from ..errors import NonPositiveInputError

MARGINAL_TOLERANCE = 1e-9


class Stability(str, enum.Enum):
    STABLE = "Stable"
    MARGINAL = "Marginal"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class StabilityReport:
    """
    Linearised loop analysis: the error obeys e_{t+1} = (1 - beta * lambda) e_t.

    ``predicted_frames_to_eps`` is None when the error never shrinks (unbounded).
    """

    beta: float
    loop_gain: float
    classification: Stability
    predicted_frames_to_eps: Optional[int]
    oscillatory: bool = False

    @property
    def unbounded(self) -> bool:
        return self.predicted_frames_to_eps is None


def _positive(name: str, value: float) -> None:
    if not (value > 0.0) or math.isinf(value):
        raise NonPositiveInputError(name, value)


def stability_analysis(beta: float, lam: float, e0_mag: float, eps: float) -> StabilityReport:
    """
    Classifies the loop gain and predicts how many frames the error needs to fall below ``eps``.

    Stable iff 0 < beta*lambda < 2. Between 1 and 2 the error alternates sign
    while shrinking, and the count uses |1 - beta*lambda|.
    """

    _positive("beta", beta)
    _positive("lambda", lam)
    _positive("e0_mag", e0_mag)
    _positive("eps", eps)

    loop_gain = beta * lam

    if abs(loop_gain - 2.0) <= MARGINAL_TOLERANCE:
        return StabilityReport(beta, loop_gain, Stability.MARGINAL, None, oscillatory=True)

    if not (0.0 < loop_gain < 2.0):
        return StabilityReport(beta, loop_gain, Stability.UNSTABLE, None, oscillatory=loop_gain > 1.0)

    rate = abs(1.0 - loop_gain)
    if eps >= e0_mag:
        frames = 0
    elif rate == 0.0:
        # Dead-beat: one step lands on the setpoint
        frames = 1
    else:
        frames = math.ceil(math.log(eps / e0_mag) / math.log(rate))

    return StabilityReport(beta, loop_gain, Stability.STABLE, frames, oscillatory=loop_gain > 1.0)


def residual_bound(h_target: float, delta_resid: float) -> float:
    """Worst-case post-convergence hallucination rate, ``h_target + delta_resid``."""

    if delta_resid < 0.0:
        raise NonPositiveInputError("delta_resid", delta_resid)

    return h_target + delta_resid
