"""Open- and closed-loop runs of the simulated plant tau -> h."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..controller.feedback import ControllerConfig, ControllerMode, HistoryRecord, proportional_law
from ..errors import InsufficientSamplesError
from ..grounding.score import GroundingConfig, GroundingMode
from ..pipeline.frame import Backends, LoopConfig, PipelineConfig, process_frame
from .config import SimWorldConfig
from .world import SimFrameSource

logger = logging.getLogger(__name__)

MIN_FRAMES_PER_POINT = 1000
MIN_GRID_POINTS = 3

Trajectory = Tuple[HistoryRecord, ...]


@dataclass(frozen=True)
class LinearPlant:
    """Stub plant h(tau) = intercept + slope * tau; values are not clipped."""

    intercept: float = 0.3
    slope: float = -0.1

    def __call__(self, tau: float) -> float:
        return self.intercept + self.slope * tau


@dataclass(frozen=True)
class SensitivityEstimate:
    tau_grid: Tuple[float, ...]
    h_of_tau: Tuple[float, ...]
    beta_hat: float
    lipschitz_hat: float

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.tau_grid, self.h_of_tau))


def _sim_backends(cfg: SimWorldConfig) -> Backends:
    # Local import: the backends package builds on simworld
    from ..backends.sim_backend import SimDetector, SimGenerator

    return Backends(SimDetector(cfg), SimGenerator(cfg))


def _loop_config(
    controller: ControllerConfig,
    pipeline: Optional[PipelineConfig],
    grounding: Optional[GroundingConfig],
) -> LoopConfig:
    grounding = grounding or GroundingConfig(mode=GroundingMode.ORACLE)
    pipeline = (pipeline or PipelineConfig()).replace(serial=True, delay_detect_ms=0.0, delay_generate_ms=0.0)
    return LoopConfig(pipeline=pipeline, grounding=grounding, controller=controller)


def _run_sim(cfg: SimWorldConfig, loop: LoopConfig, n_frames: int) -> Tuple[Trajectory, List[float]]:
    """Serial loop over simulated frames; returns the trajectory and the per-frame rates of non-empty frames."""

    state = loop.initial_state()
    backends = _sim_backends(cfg)
    trajectory = []
    frame_rates = []

    for t, frame in enumerate(SimFrameSource(cfg, n_frames)):
        tau = state.tau
        result, state = process_frame(frame, state, backends, loop)
        trajectory.append(HistoryRecord(t, tau, result.h_t, result.h_t - loop.controller.h_target))
        if result.filtered.n:
            frame_rates.append(result.report.h_frame)

    return tuple(trajectory), frame_rates


def open_loop_h(
    cfg: SimWorldConfig,
    tau: float,
    n_frames: int,
    pipeline: Optional[PipelineConfig] = None,
    grounding: Optional[GroundingConfig] = None,
) -> float:
    """Mean per-frame hallucination rate at a fixed threshold, over frames with something left to describe."""

    controller = ControllerConfig(mode=ControllerMode.FIXED, tau_init=tau, tau_min=0.0, tau_max=1.0)
    _, rates = _run_sim(cfg, _loop_config(controller, pipeline, grounding), n_frames)
    return float(np.mean(rates)) if rates else 0.0


def estimate_sensitivity(
    cfg: SimWorldConfig,
    tau_grid: Sequence[float],
    frames_per_point: int = MIN_FRAMES_PER_POINT,
    plant=None,
) -> SensitivityEstimate:
    """
    Measures h at each grid threshold and differentiates.

    ``beta_hat`` is the central difference around the middle grid point;
    ``lipschitz_hat`` the steepest slope between neighbours. A ``plant``
    callable replaces the simulator.
    """

    grid = tuple(float(t) for t in tau_grid)
    if len(grid) < MIN_GRID_POINTS:
        raise InsufficientSamplesError(f"need at least {MIN_GRID_POINTS} grid points, got {len(grid)}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InsufficientSamplesError(f"grid must be strictly ascending, got {grid}")
    if grid[0] <= 0.0 or grid[-1] >= 1.0:
        raise InsufficientSamplesError(f"grid must lie strictly inside (0, 1), got {grid}")
    if frames_per_point < MIN_FRAMES_PER_POINT:
        raise InsufficientSamplesError(f"need at least {MIN_FRAMES_PER_POINT} frames per point, got {frames_per_point}")

    if plant is not None:
        h = tuple(float(plant(t)) for t in grid)
    else:
        h = tuple(open_loop_h(cfg, t, frames_per_point) for t in grid)
        logger.info(f"Sensitivity grid {grid}: h = {tuple(round(v, 4) for v in h)}")

    mid = len(grid) // 2
    beta_hat = abs((h[mid + 1] - h[mid - 1]) / (grid[mid + 1] - grid[mid - 1]))
    slopes = [abs((h[i + 1] - h[i]) / (grid[i + 1] - grid[i])) for i in range(len(grid) - 1)]

    return SensitivityEstimate(grid, h, beta_hat, max(slopes))


def _plant_loop(plant, controller: ControllerConfig, n_frames: int) -> Trajectory:
    bounds = (controller.tau_min, controller.tau_max) if controller.clamp else None
    tau = controller.tau_init
    trajectory = []

    for t in range(n_frames):
        h = plant(tau)
        error = h - controller.h_target
        trajectory.append(HistoryRecord(t, tau, h, error))
        if controller.mode is not ControllerMode.FIXED:
            tau = proportional_law(tau, error, controller.lam, bounds)

    return tuple(trajectory)


def closed_loop_run(
    cfg: SimWorldConfig,
    controller: ControllerConfig,
    n_frames: int,
    plant=None,
    pipeline: Optional[PipelineConfig] = None,
    grounding: Optional[GroundingConfig] = None,
) -> Trajectory:
    """
    Full loop over ``n_frames`` simulated frames with oracle grounding.

    Each record is (t, tau that filtered frame t, h_t after it, h_t - h_target).
    With a ``plant`` the loop runs on the stub directly, h = plant(tau).
    """

    if n_frames < 1:
        raise InsufficientSamplesError(f"need at least one frame, got {n_frames}")

    if plant is not None:
        return _plant_loop(plant, controller, n_frames)

    trajectory, _ = _run_sim(cfg, _loop_config(controller, pipeline, grounding), n_frames)
    return trajectory


def steady_state_h(trajectory: Trajectory, last: int = 300) -> float:
    tail = trajectory[-last:]
    return float(np.mean([rec.h_t for rec in tail])) if tail else 0.0


def frames_to_converge(trajectory: Trajectory, eps: float, start: int = 0) -> Optional[int]:
    """First t >= ``start`` with |e_t| <= eps, or None."""

    for rec in trajectory:
        if rec.t >= start and abs(rec.e_t) <= eps:
            return rec.t
    return None


def measured_residual(trajectory: Trajectory, h_target: float, last: int = 300) -> float:
    """Largest excess of h_t over the setpoint in the final ``last`` frames."""

    tail = trajectory[-last:]
    return max([0.0] + [rec.h_t - h_target for rec in tail])

