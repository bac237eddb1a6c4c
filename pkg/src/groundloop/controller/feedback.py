import enum
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, TextIO, Tuple

from ..core.section import ConfigSection
from ..core.var import ConfigVar
from ..errors import ConfigError, GammaOutOfRangeError, HRateOutOfRangeError

logger = logging.getLogger(__name__)

# Range the gain is documented to behave well in; outside it we only log
RECOMMENDED_LAMBDA = (0.01, 0.1)


class ControllerMode(str, enum.Enum):
    PROPORTIONAL = "proportional"
    BUMP = "bump"
    # Open loop: tau stays at tau_init
    FIXED = "fixed"


class ControllerConfig(ConfigSection):
    """Gains, setpoint and clamp bounds of the threshold controller."""

    class Config:
        key_prefix = "controller."

    lam: float = ConfigVar(default=0.05, key="lambda", help="proportional gain")
    h_target: float = ConfigVar(default=0.1, help="hallucination-rate setpoint")
    tau_init: float = ConfigVar(default=0.5, help="initial confidence threshold")
    tau_min: float = ConfigVar(default=0.05, help="lower clamp bound")
    tau_max: float = ConfigVar(default=0.95, help="upper clamp bound")
    mode: ControllerMode = ConfigVar(default=ControllerMode.PROPORTIONAL, help="proportional | bump | fixed")
    delta: float = ConfigVar(default=0.01, help="bump step")
    gamma_threshold: float = ConfigVar(default=0.85, help="bump when gamma falls below this")
    decay: float = ConfigVar(default=0.0, help="bump-mode multiplicative decay per frame")
    clamp: bool = ConfigVar(default=True, help="keep tau inside [tau_min, tau_max]")
    history_capacity: int = ConfigVar(default=4096, help="controller history ring size")

    def validate(self) -> None:

        if not (0.0 < self.lam <= 2.0) or math.isnan(self.lam):
            raise ConfigError(self.key_of("lam"), f"gain must be in (0, 2], got {self.lam}")
        if not (0.0 <= self.h_target < 1.0):
            raise ConfigError(self.key_of("h_target"), f"setpoint must be in [0, 1), got {self.h_target}")
        if not (0.0 <= self.tau_min < self.tau_init < self.tau_max <= 1.0):
            raise ConfigError(
                self.key_of("tau_init"),
                f"need 0 <= tau_min < tau_init < tau_max <= 1, got "
                f"{self.tau_min}, {self.tau_init}, {self.tau_max}",
            )
        if self.delta <= 0.0:
            raise ConfigError(self.key_of("delta"), f"bump step must be positive, got {self.delta}")
        if not (0.0 <= self.gamma_threshold <= 1.0):
            raise ConfigError(self.key_of("gamma_threshold"), f"must be in [0, 1], got {self.gamma_threshold}")
        if not (0.0 <= self.decay < 1.0):
            raise ConfigError(self.key_of("decay"), f"must be in [0, 1), got {self.decay}")
        if self.history_capacity < 1:
            raise ConfigError(self.key_of("history_capacity"), "must be at least 1")

        lo, hi = RECOMMENDED_LAMBDA
        if not (lo <= self.lam <= hi):
            logger.warning(f"controller gain {self.lam} is outside the recommended range [{lo}, {hi}]")


class HistoryRecord(NamedTuple):
    t: int
    tau: float
    h_t: float
    e_t: float


@dataclass(frozen=True)
class ControllerState:
    """
    Threshold controller state after ``step`` updates.

    ``history`` keeps the newest ``config.history_capacity`` records; each
    record pairs the threshold that was in effect with the rate it produced.
    """

    config: ControllerConfig
    tau: float
    step: int = 0
    last_h: float = 0.0
    history: Tuple[HistoryRecord, ...] = field(default=(), repr=False)

    @classmethod
    def initial(cls, config: ControllerConfig) -> "ControllerState":
        return cls(config=config, tau=config.tau_init)

    @property
    def last_error(self) -> float:
        return self.last_h - self.config.h_target

    def snapshot(self) -> "ControllerState":
        # Frozen already; kept so readers do not depend on that detail
        return self

    def _advance(self, new_tau: float, h: float) -> "ControllerState":
        record = HistoryRecord(self.step, self.tau, h, h - self.config.h_target)
        history = self.history + (record,)
        if len(history) > self.config.history_capacity:
            history = history[-self.config.history_capacity:]

        return ControllerState(self.config, new_tau, self.step + 1, h, history)


def _clamp(value: float, cfg: ControllerConfig) -> float:
    if not cfg.clamp:
        return value

    return min(cfg.tau_max, max(cfg.tau_min, value))


def proportional_law(tau: float, error: float, lam: float, bounds: Optional[Tuple[float, float]] = None) -> float:
    """tau + lam * error, optionally clamped to ``bounds``."""

    new_tau = tau + lam * error
    if bounds is not None:
        new_tau = min(bounds[1], max(bounds[0], new_tau))

    return new_tau


def update_proportional(state: ControllerState, h_t: float) -> ControllerState:
    """Applies the proportional threshold update for a measured rate ``h_t``."""

    if not (0.0 <= h_t <= 1.0):
        raise HRateOutOfRangeError(h_t)

    cfg = state.config
    raw = proportional_law(state.tau, h_t - cfg.h_target, cfg.lam)
    new_tau = _clamp(raw, cfg)

    if new_tau != raw:
        logger.debug(f"step {state.step}: tau {raw:.6f} clamped to {new_tau:.6f}")

    return state._advance(new_tau, h_t)


def update_bump(state: ControllerState, gamma: float) -> ControllerState:
    """Raises tau by ``delta`` when the frame's grounding score dips below the threshold."""

    if not (0.0 <= gamma <= 1.0):
        raise GammaOutOfRangeError(gamma)

    cfg = state.config
    tau = state.tau
    if gamma < cfg.gamma_threshold:
        tau = tau + cfg.delta

    if cfg.decay:
        tau = tau * (1.0 - cfg.decay)

    return state._advance(_clamp(tau, cfg), 1.0 - gamma)


def hold(state: ControllerState, h_t: float) -> ControllerState:
    """Open-loop step: records ``h_t`` and keeps tau."""

    if not (0.0 <= h_t <= 1.0):
        raise HRateOutOfRangeError(h_t)

    return state._advance(state.tau, h_t)


def update(state: ControllerState, h_t: float, gamma: float) -> ControllerState:
    """Dispatches on the configured mode; proportional reads h_t, bump reads gamma."""

    mode = state.config.mode
    if mode is ControllerMode.PROPORTIONAL:
        return update_proportional(state, h_t)
    if mode is ControllerMode.BUMP:
        return update_bump(state, gamma)

    return hold(state, h_t)


def format_history(records: Iterable[HistoryRecord], delimiter: str = "\t") -> str:
    """``t, tau, h_t, e_t`` table, 6 decimals."""

    buf = io.StringIO()
    buf.write(delimiter.join(HistoryRecord._fields) + "\n")
    for rec in records:
        buf.write(delimiter.join((str(rec.t), f"{rec.tau:.6f}", f"{rec.h_t:.6f}", f"{rec.e_t:.6f}")) + "\n")

    return buf.getvalue()


def export_history(state: ControllerState, out: Optional[TextIO] = None, delimiter: str = "\t") -> str:
    """Writes the controller history as a delimited table and returns the text."""

    text = format_history(state.history, delimiter)
    if out is not None:
        out.write(text)

    return text
