from .config import SimWorldConfig
from .experiments import (
    LinearPlant,
    SensitivityEstimate,
    closed_loop_run,
    estimate_sensitivity,
    frames_to_converge,
    measured_residual,
    open_loop_h,
    steady_state_h,
)
from .world import SimFrameSource, TruthObject, gen_frame, render_pixels, simulate_detector, simulate_generator

__all__ = [
    "SimWorldConfig",
    "LinearPlant",
    "SensitivityEstimate",
    "closed_loop_run",
    "estimate_sensitivity",
    "frames_to_converge",
    "measured_residual",
    "open_loop_h",
    "steady_state_h",
    "SimFrameSource",
    "TruthObject",
    "gen_frame",
    "render_pixels",
    "simulate_detector",
    "simulate_generator",
]
