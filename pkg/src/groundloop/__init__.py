from .config import Settings, load_run_config, write_snapshot
from .controller import ControllerConfig, ControllerMode, ControllerState, stability_analysis, update
from .core import BBox, Description, Detection, DetectionSet, FrameMeta, SceneSummary, Token
from .errors import GroundloopError
from .grounding import GroundingConfig, GroundingMode, RateEstimator, grounding_score, update_rate
from .pipeline import Backends, Frame, FrameResult, LoopConfig, LoopState, PipelineConfig, process_frame, run_stream
from .simworld import SimFrameSource, SimWorldConfig

__version__ = "0.1.0"

__all__ = [

    # Configuration
    "Settings",
    "load_run_config",
    "write_snapshot",

    # Controller
    "ControllerConfig",
    "ControllerMode",
    "ControllerState",
    "stability_analysis",
    "update",

    # Core types
    "BBox",
    "Description",
    "Detection",
    "DetectionSet",
    "FrameMeta",
    "SceneSummary",
    "Token",

    # Errors
    "GroundloopError",

    # Grounding
    "GroundingConfig",
    "GroundingMode",
    "RateEstimator",
    "grounding_score",
    "update_rate",

    # Pipeline
    "Backends",
    "Frame",
    "FrameResult",
    "LoopConfig",
    "LoopState",
    "PipelineConfig",
    "process_frame",
    "run_stream",

    # Simulation
    "SimFrameSource",
    "SimWorldConfig",
]
