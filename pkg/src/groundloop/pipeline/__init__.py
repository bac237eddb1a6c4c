from .frame import (
    Backends,
    Frame,
    FrameResult,
    LatencyRecord,
    LoopConfig,
    LoopState,
    PipelineConfig,
    call_with_retries,
    describe_stage,
    detect_stage,
    process_frame,
)
from .stages import (
    PROMPT_TEMPLATE,
    Prompt,
    Relation,
    Roi,
    SpatialRelation,
    assemble_scene,
    build_prompt,
    crop_roi,
    filter_detections,
    generate,
    spatial_relations,
)
from .stream import RunReport, run_stream

__all__ = [
    "Backends",
    "Frame",
    "FrameResult",
    "LatencyRecord",
    "LoopConfig",
    "LoopState",
    "PipelineConfig",
    "call_with_retries",
    "describe_stage",
    "detect_stage",
    "process_frame",
    "PROMPT_TEMPLATE",
    "Prompt",
    "Relation",
    "Roi",
    "SpatialRelation",
    "assemble_scene",
    "build_prompt",
    "crop_roi",
    "filter_detections",
    "generate",
    "spatial_relations",
    "RunReport",
    "run_stream",
]
