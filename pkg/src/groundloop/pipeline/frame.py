import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Optional, Tuple, TypeVar

from ..controller.feedback import ControllerConfig, ControllerState, update
from ..core.section import ConfigSection
from ..core.types import (
    Description,
    DetectionSet,
    FrameMeta,
    SceneSummary,
    register_record_type,
    validate_detection_set,
)
from ..core.var import ConfigVar
from ..core.vocab import load_whitelist
from ..errors import (
    AlignmentMismatchError,
    BackendTimeoutError,
    BackendUnavailableError,
    ConfigError,
    GroundloopError,
    MalformedBackendReplyError,
    StageError,
    ValidationError,
)
from ..grounding.rate import RateEstimator, update_rate
from ..grounding.score import GroundingConfig, GroundingReport, grounding_score
from .stages import assemble_scene, build_prompt, crop_roi, filter_detections, generate, spatial_relations

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Failures worth another attempt; anything else aborts at once
RETRYABLE = (BackendUnavailableError, BackendTimeoutError, MalformedBackendReplyError)


class PipelineConfig(ConfigSection):
    """Latency accounting, retries and scheduling of the two pipeline stages."""

    class Config:
        key_prefix = "pipeline."

    alpha_us: int = ConfigVar(default=100, help="fixed per-frame overhead added to the slower stage")
    frame_budget_us: int = ConfigVar(default=55000, help="per-frame latency budget")
    retries: int = ConfigVar(default=3, help="attempts after the first failed backend call")
    backoff_ms: float = ConfigVar(default=10.0, help="first retry delay, doubled per attempt")
    queue_capacity: int = ConfigVar(default=2, help="frames buffered between detect and describe")
    skip_empty_frames: bool = ConfigVar(default=False, help="keep frames with no surviving detection out of the rate window")
    serial: bool = ConfigVar(default=False, help="run detect and describe back to back on one thread")
    delay_detect_ms: float = ConfigVar(default=0.0, help="injected detect-stage delay per frame")
    delay_generate_ms: float = ConfigVar(default=0.0, help="injected describe-stage delay per frame")
    check_detections: bool = ConfigVar(default=True, help="check detection sets against the frame geometry")

    def validate(self) -> None:
        for name in ("alpha_us", "frame_budget_us", "retries", "backoff_ms", "delay_detect_ms", "delay_generate_ms"):
            if getattr(self, name) < 0:
                raise ConfigError(self.key_of(name), f"must not be negative, got {getattr(self, name)}")
        if self.queue_capacity < 1:
            raise ConfigError(self.key_of("queue_capacity"), "must be at least 1")


@dataclass(frozen=True)
class Frame:
    """One input frame. ``truth`` holds simulator ground truth and is empty for real sources."""

    meta: FrameMeta
    pixels: bytes
    truth: Tuple[Any, ...] = ()

    @property
    def frame_id(self) -> int:
        return self.meta.frame_id


@register_record_type
@dataclass(frozen=True)
class LatencyRecord:
    dt_detect_us: int
    dt_generate_us: int
    alpha_us: int = 100
    frame_budget_us: int = 55000
    t_total_us: int = field(init=False)
    met_budget: bool = field(init=False)

    def __post_init__(self):
        if self.dt_detect_us < 0 or self.dt_generate_us < 0:
            raise ValidationError(f"stage times must not be negative, got {self.dt_detect_us} and {self.dt_generate_us}")
        total = max(self.dt_detect_us, self.dt_generate_us) + self.alpha_us
        object.__setattr__(self, "t_total_us", total)
        object.__setattr__(self, "met_budget", total <= self.frame_budget_us)

    def to_record(self) -> Dict[str, Any]:
        return {
            "dt_detect_us": self.dt_detect_us,
            "dt_generate_us": self.dt_generate_us,
            "alpha_us": self.alpha_us,
            "t_total_us": self.t_total_us,
            "frame_budget_us": self.frame_budget_us,
            "met_budget": self.met_budget,
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "LatencyRecord":
        return cls(
            int(rec["dt_detect_us"]),
            int(rec["dt_generate_us"]),
            int(rec.get("alpha_us", 100)),
            int(rec.get("frame_budget_us", 55000)),
        )


@register_record_type
@dataclass(frozen=True)
class FrameResult:
    frame_id: int
    filtered: DetectionSet
    descriptions: Tuple[Description, ...]
    report: GroundingReport
    summary: SceneSummary
    latency: LatencyRecord
    tau_used: float
    tau_after: float
    h_t: float

    def __post_init__(self):
        object.__setattr__(self, "descriptions", tuple(self.descriptions))
        if len(self.descriptions) != self.filtered.n:
            raise AlignmentMismatchError(len(self.descriptions), self.filtered.n)

    def without_timing(self) -> Dict[str, Any]:
        """Record minus wall-clock fields; identical inputs give identical values."""

        rec = self.to_record()
        rec.pop("latency")
        return rec

    def to_record(self) -> Dict[str, Any]:
        return {
            "frame_id": self.frame_id,
            "filtered": self.filtered.to_record(),
            "descriptions": [d.to_record() for d in self.descriptions],
            "report": self.report.to_record(),
            "summary": self.summary.to_record(),
            "latency": self.latency.to_record(),
            "tau_used": self.tau_used,
            "tau_after": self.tau_after,
            "h_t": self.h_t,
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "FrameResult":
        return cls(
            frame_id=int(rec["frame_id"]),
            filtered=DetectionSet.from_record(rec["filtered"]),
            descriptions=tuple(Description.from_record(d) for d in rec.get("descriptions", [])),
            report=GroundingReport.from_record(rec["report"]),
            summary=SceneSummary.from_record(rec["summary"]),
            latency=LatencyRecord.from_record(rec["latency"]),
            tau_used=float(rec["tau_used"]),
            tau_after=float(rec["tau_after"]),
            h_t=float(rec["h_t"]),
        )


@dataclass(frozen=True)
class LoopState:
    """Controller state travelling with the rate estimator that feeds it."""

    controller: ControllerState
    rate: RateEstimator

    @classmethod
    def initial(cls, controller: ControllerConfig, window: int) -> "LoopState":
        return cls(ControllerState.initial(controller), RateEstimator(window))

    @property
    def tau(self) -> float:
        return self.controller.tau


@dataclass(frozen=True)
class LoopConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    def initial_state(self) -> LoopState:
        return LoopState.initial(self.controller, self.grounding.window)

    @property
    def whitelist(self):
        return load_whitelist(self.grounding.whitelist)


class Backends(NamedTuple):
    detector: Any
    describer: Any


def _now_us() -> int:
    return time.perf_counter_ns() // 1000


def call_with_retries(fn: Callable[[], T], cfg: PipelineConfig, what: str) -> T:
    """Calls ``fn``; retryable backend errors get up to ``cfg.retries`` more attempts with doubling backoff."""

    attempt = 0
    while True:
        try:
            return fn()
        except RETRYABLE as e:
            if attempt >= cfg.retries:
                logger.error(f"{what} failed after {attempt + 1} attempt(s): {e}")
                raise
            delay = cfg.backoff_ms * (2 ** attempt) / 1000.0
            logger.warning(f"{what} failed ({e}); retrying in {delay * 1000:.0f} ms")
            time.sleep(delay)
            attempt += 1


def _stage(name: str, frame_id: int, fn: Callable[[], T]) -> T:
    try:
        return fn()
    except StageError:
        raise
    except GroundloopError as e:
        raise StageError(name, frame_id, e) from e


def detect_stage(frame: Frame, detector: Any, cfg: PipelineConfig) -> Tuple[DetectionSet, int]:
    """Runs the detector on ``frame``; returns the detections and the stage wall time in microseconds."""

    start = _now_us()
    if cfg.delay_detect_ms:
        time.sleep(cfg.delay_detect_ms / 1000.0)

    ds = _stage("detect", frame.frame_id, lambda: call_with_retries(lambda: detector.detect(frame), cfg, "detect"))
    if cfg.check_detections:
        _stage("validate", frame.frame_id, lambda: validate_detection_set(ds, frame.meta))

    return ds, _now_us() - start


def describe_stage(
    frame: Frame,
    ds: DetectionSet,
    dt_detect_us: int,
    state: LoopState,
    describer: Any,
    config: LoopConfig,
) -> Tuple[FrameResult, LoopState]:
    """
    Everything after detection for one frame, in order: filter with the
    current tau, describe each survivor, score, update rate and controller,
    assemble the scene summary.
    """

    pcfg = config.pipeline
    frame_id = frame.frame_id
    start = _now_us()
    if pcfg.delay_generate_ms:
        time.sleep(pcfg.delay_generate_ms / 1000.0)

    tau_used = state.tau
    filtered = filter_detections(ds, tau_used)
    labels = filtered.labels
    whitelist = config.whitelist

    descriptions = []
    for i, det in enumerate(filtered.detections):
        roi = _stage("crop", frame_id, lambda: crop_roi(frame.pixels, frame.meta, det.bbox))
        prompt = _stage("prompt", frame_id, lambda: build_prompt(det.label))
        description = _stage(
            "generate",
            frame_id,
            lambda: call_with_retries(
                lambda: generate(describer, prompt, roi, det, labels, i, whitelist), pcfg, f"generate frame {frame_id}"
            ),
        )
        descriptions.append(description)

    report = _stage(
        "ground",
        frame_id,
        lambda: grounding_score(descriptions, labels, config.grounding.mode, whitelist, frame_id),
    )

    rate = state.rate
    if filtered.n or not pcfg.skip_empty_frames:
        rate = _stage("rate", frame_id, lambda: update_rate(state.rate, report.h_frame))

    controller = _stage("control", frame_id, lambda: update(state.controller, rate.h_t, report.gamma))

    relations = spatial_relations(filtered)
    summary = _stage("assemble", frame_id, lambda: assemble_scene(descriptions, relations, filtered))

    latency = LatencyRecord(dt_detect_us, _now_us() - start, pcfg.alpha_us, pcfg.frame_budget_us)
    if not latency.met_budget:
        logger.debug(f"frame {frame_id}: {latency.t_total_us} us exceeds budget {pcfg.frame_budget_us} us")

    logger.debug(
        f"frame {frame_id}: tau {tau_used:.4f} -> {controller.tau:.4f}, "
        f"kept {filtered.n}/{ds.n}, gamma {report.gamma:.4f}, h_t {rate.h_t:.4f}"
    )

    result = FrameResult(
        frame_id=frame_id,
        filtered=filtered,
        descriptions=tuple(descriptions),
        report=report,
        summary=summary,
        latency=latency,
        tau_used=tau_used,
        tau_after=controller.tau,
        h_t=rate.h_t,
    )
    return result, LoopState(controller, rate)


def process_frame(
    frame: Frame,
    state: LoopState,
    backends: Backends,
    config: Optional[LoopConfig] = None,
) -> Tuple[FrameResult, LoopState]:
    """
    One full pass of the loop over ``frame``.

    The threshold that filters this frame is the one in ``state``; the
    update computed here takes effect from the next frame. Errors raised by
    a stage come back as ``StageError`` naming that stage.
    """

    config = config or LoopConfig()
    ds, dt_detect = detect_stage(frame, backends.detector, config.pipeline)
    return describe_stage(frame, ds, dt_detect, state, backends.describer, config)
