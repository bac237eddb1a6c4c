from .feedback import (
    ControllerConfig,
    ControllerMode,
    ControllerState,
    HistoryRecord,
    export_history,
    format_history,
    hold,
    proportional_law,
    update,
    update_bump,
    update_proportional,
)
from .stability import Stability, StabilityReport, residual_bound, stability_analysis

__all__ = [
    "ControllerConfig",
    "ControllerMode",
    "ControllerState",
    "HistoryRecord",
    "export_history",
    "format_history",
    "hold",
    "proportional_law",
    "update",
    "update_bump",
    "update_proportional",
    "Stability",
    "StabilityReport",
    "residual_bound",
    "stability_analysis",
]
