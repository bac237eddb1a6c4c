import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..core.types import register_record_type
from .frame import Backends, Frame, FrameResult, LoopConfig, LoopState, describe_stage, detect_stage

logger = logging.getLogger(__name__)

Sink = Callable[[FrameResult], None]

# Poll interval for a producer blocked on a full queue
_PUT_POLL_S = 0.05


@register_record_type
@dataclass(frozen=True)
class RunReport:
    frames: int = 0
    latency_mean_us: float = 0.0
    latency_p50_us: float = 0.0
    latency_p95_us: float = 0.0
    latency_p99_us: float = 0.0
    budget_misses: int = 0
    wall_us_per_frame: float = 0.0
    final_tau: float = 0.0
    h_trajectory: Tuple[float, ...] = field(default=(), repr=False)
    tau_trajectory: Tuple[float, ...] = field(default=(), repr=False)

    @classmethod
    def from_results(
        cls,
        latencies: List[int],
        misses: int,
        completions: List[int],
        final_tau: float,
        h_trajectory: List[float],
        tau_trajectory: List[float],
    ) -> "RunReport":
        if not latencies:
            return cls(final_tau=final_tau)

        lat = np.asarray(latencies, dtype=float)
        p50, p95, p99 = np.percentile(lat, [50, 95, 99])

        # Steady state: median gap between consecutive completions
        wall = float(np.median(np.diff(completions))) if len(completions) > 1 else float(lat[0])

        return cls(
            frames=len(latencies),
            latency_mean_us=float(lat.mean()),
            latency_p50_us=float(p50),
            latency_p95_us=float(p95),
            latency_p99_us=float(p99),
            budget_misses=misses,
            wall_us_per_frame=wall,
            final_tau=final_tau,
            h_trajectory=tuple(h_trajectory),
            tau_trajectory=tuple(tau_trajectory),
        )

    def to_record(self) -> Dict[str, Any]:
        return {
            "frames": self.frames,
            "latency_mean_us": self.latency_mean_us,
            "latency_p50_us": self.latency_p50_us,
            "latency_p95_us": self.latency_p95_us,
            "latency_p99_us": self.latency_p99_us,
            "budget_misses": self.budget_misses,
            "wall_us_per_frame": self.wall_us_per_frame,
            "final_tau": self.final_tau,
            "h_trajectory": list(self.h_trajectory),
            "tau_trajectory": list(self.tau_trajectory),
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "RunReport":
        return cls(
            frames=int(rec["frames"]),
            latency_mean_us=float(rec["latency_mean_us"]),
            latency_p50_us=float(rec["latency_p50_us"]),
            latency_p95_us=float(rec["latency_p95_us"]),
            latency_p99_us=float(rec["latency_p99_us"]),
            budget_misses=int(rec["budget_misses"]),
            wall_us_per_frame=float(rec["wall_us_per_frame"]),
            final_tau=float(rec["final_tau"]),
            h_trajectory=tuple(float(h) for h in rec.get("h_trajectory", [])),
            tau_trajectory=tuple(float(t) for t in rec.get("tau_trajectory", [])),
        )


class _Done:
    pass


@dataclass
class _Failed:
    error: BaseException


class _Detections(threading.Thread):
    """Detect stage: runs ahead of the consumer by at most the queue capacity."""

    def __init__(self, source: Iterable[Frame], backends: Backends, config: LoopConfig, should_stop: Callable[[], bool]):
        super().__init__(name="groundloop-detect", daemon=True)
        self.source = source
        self.detector = backends.detector
        self.config = config
        self.should_stop = should_stop
        self.queue: "queue.Queue[Any]" = queue.Queue(maxsize=config.pipeline.queue_capacity)

    def _put(self, item: Any) -> bool:
        while not self.should_stop():
            try:
                self.queue.put(item, timeout=_PUT_POLL_S)
                return True
            except queue.Full:
                continue
        return False

    def run(self):
        try:
            for frame in self.source:
                if self.should_stop():
                    break
                ds, dt = detect_stage(frame, self.detector, self.config.pipeline)
                if not self._put((frame, ds, dt)):
                    return
        except BaseException as e:
            self._put(_Failed(e))
            return

        self._put(_Done())

    def items(self):
        while True:
            try:
                item = self.queue.get(timeout=_PUT_POLL_S)
            except queue.Empty:
                if self.should_stop() or not self.is_alive():
                    return
                continue

            if isinstance(item, _Done):
                return
            if isinstance(item, _Failed):
                raise item.error
            yield item


def _serial(source: Iterable[Frame], backends: Backends, config: LoopConfig, stop: threading.Event):
    for frame in source:
        if stop.is_set():
            return
        ds, dt = detect_stage(frame, backends.detector, config.pipeline)
        yield frame, ds, dt


def run_stream(
    source: Iterable[Frame],
    backends: Backends,
    config: Optional[LoopConfig] = None,
    sink: Optional[Sink] = None,
    state: Optional[LoopState] = None,
    stop: Optional[threading.Event] = None,
) -> RunReport:
    """
    Runs the loop over ``source`` until it is exhausted or ``stop`` is set.

    Detection of the next frame overlaps description of the current one
    unless ``pipeline.serial`` is set. Controller updates and ``sink`` calls
    happen on the calling thread, in frame order. A backend failure that
    survives its retries aborts the run and is re-raised.
    """

    config = config or LoopConfig()
    state = state or config.initial_state()
    stop = stop or threading.Event()
    halt = threading.Event()

    latencies: List[int] = []
    completions: List[int] = []
    h_trajectory: List[float] = []
    tau_trajectory: List[float] = []
    misses = 0

    if config.pipeline.serial:
        producer = None
        items = _serial(source, backends, config, stop)
    else:
        producer = _Detections(source, backends, config, lambda: stop.is_set() or halt.is_set())
        producer.start()
        items = producer.items()

    try:
        for frame, ds, dt_detect in items:
            result, state = describe_stage(frame, ds, dt_detect, state, backends.describer, config)

            latencies.append(result.latency.t_total_us)
            completions.append(time.perf_counter_ns() // 1000)
            h_trajectory.append(result.h_t)
            tau_trajectory.append(result.tau_after)
            misses += 0 if result.latency.met_budget else 1

            if sink is not None:
                sink(result)

            if stop.is_set():
                break
    except Exception as e:
        logger.error(f"Aborting stream after {len(latencies)} frame(s): {e}")
        raise
    finally:
        halt.set()
        if producer is not None:
            producer.join(timeout=1.0)

    logger.info(f"Stream finished: {len(latencies)} frame(s), final tau {state.tau:.4f}")
    return RunReport.from_results(latencies, misses, completions, state.tau, h_trajectory, tau_trajectory)
