from typing import Any, Optional


class GroundloopError(Exception):
    """Base exception for groundloop."""

    pass


# ---------------------------------------------------------------------------
# Validation of core values
# ---------------------------------------------------------------------------

class ValidationError(GroundloopError):
    """Raised when a core value violates one of its invariants."""

    pass


class ConfidenceOutOfRangeError(ValidationError):
    def __init__(self, index: int, confidence: float):
        self.index = index
        self.confidence = confidence
        super().__init__(f"Detection {index} has confidence {confidence!r} outside [0, 1]")


class BoxOutOfBoundsError(ValidationError):
    def __init__(self, index: int, detail: str):
        self.index = index
        super().__init__(f"Detection {index} has a box out of frame bounds: {detail}")


class EmptyLabelError(ValidationError):
    def __init__(self, index: Optional[int] = None, label: str = ""):
        self.index = index
        self.label = label
        where = f"Detection {index}" if index is not None else "Label"
        detail = f" ({label!r} is not in the vocabulary)" if label else ""
        super().__init__(f"{where} has an empty or unknown label{detail}")


class FrameMismatchError(ValidationError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"Detection set belongs to frame {got}, expected frame {expected}")


# ---------------------------------------------------------------------------
# Controller
# ---------------------------------------------------------------------------

class ControllerError(GroundloopError):
    pass


class HRateOutOfRangeError(ControllerError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"Hallucination rate {value!r} is outside [0, 1]")


class GammaOutOfRangeError(ControllerError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"Grounding score {value!r} is outside [0, 1]")


class NonPositiveInputError(ControllerError):
    def __init__(self, name: str, value: float):
        self.name = name
        super().__init__(f"'{name}' must be strictly positive, got {value!r}")


# ---------------------------------------------------------------------------
# Grounding
# ---------------------------------------------------------------------------

class GroundingError(GroundloopError):
    pass


class UnknownTagInOracleModeError(GroundingError):
    def __init__(self, description_index: int, token_index: int):
        super().__init__(
            f"Token {token_index} of description {description_index} has no truth tag; "
            f"oracle grounding needs every token tagged"
        )


class OutOfRangeError(GroundingError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"Per-frame hallucination rate {value!r} is outside [0, 1]")


class UnknownTruthTagsError(GroundingError):
    def __init__(self, count: int):
        super().__init__(f"{count} detection(s) carry an Unknown truth tag")


class EmptySetError(GroundingError):
    def __init__(self):
        super().__init__("Detection set is empty")


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

class PipelineError(GroundloopError):
    pass


class ZeroAreaRoiError(PipelineError):
    def __init__(self, bbox: Any):
        super().__init__(f"Box {bbox} has zero area after clamping to the frame")


class GeometryMismatchError(PipelineError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"Frame buffer holds {got} bytes, geometry requires {expected}")


class AlignmentMismatchError(PipelineError):
    def __init__(self, descriptions: int, detections: int):
        super().__init__(f"{descriptions} description(s) for {detections} filtered detection(s)")


class StageError(PipelineError):
    """Raised by ``process_frame`` with the name of the failing stage."""

    def __init__(self, stage: str, frame_id: int, original_error: Exception):
        self.stage = stage
        self.frame_id = frame_id
        self.original_error = original_error
        super().__init__(f"Stage '{stage}' failed on frame {frame_id}: {original_error}")


class InsufficientSamplesError(GroundloopError):
    def __init__(self, detail: str):
        super().__init__(f"Insufficient samples: {detail}")


# ---------------------------------------------------------------------------
# Backends and wire protocol
# ---------------------------------------------------------------------------

class BackendError(GroundloopError):
    pass


class BackendUnavailableError(BackendError):
    def __init__(self, detail: str):
        super().__init__(f"Backend unavailable: {detail}")


class BackendTimeoutError(BackendError):
    def __init__(self, what: str, elapsed_ms: float):
        self.elapsed_ms = elapsed_ms
        super().__init__(f"Backend timed out on {what} after {elapsed_ms:.1f} ms")


class MalformedBackendReplyError(BackendError):
    def __init__(self, detail: str, original_error: Optional[Exception] = None):
        self.original_error = original_error
        suffix = f": {original_error}" if original_error is not None else ""
        super().__init__(f"Malformed backend reply ({detail}){suffix}")


class CapabilityError(BackendError):
    def __init__(self, capability: str):
        super().__init__(f"Peer did not advertise the '{capability}' capability")


class ProtocolError(BackendError):
    pass


class VersionMismatchError(ProtocolError):
    def __init__(self, expected: int, got: Any):
        super().__init__(f"Peer speaks protocol version {got!r}, expected {expected}")


class UnreachableError(ProtocolError):
    def __init__(self, address: str, original_error: Exception):
        super().__init__(f"Cannot reach adapter at '{address}': {original_error}")


class HandshakeTimeoutError(ProtocolError):
    def __init__(self, timeout_ms: int):
        super().__init__(f"No hello from peer within {timeout_ms} ms")


# ---------------------------------------------------------------------------
# Configuration and reports
# ---------------------------------------------------------------------------

class ConfigError(GroundloopError):
    """Raised when a configuration key or value is invalid."""

    def __init__(self, key: str, detail: str):
        self.key = key
        super().__init__(f"Invalid configuration '{key}': {detail}")


class InvalidConfigValueError(ConfigError):
    """Raised when a config value cannot be converted to the target type."""

    def __init__(self, key: str, value: str, target_type: Any, original_error: Exception):
        self.value = value
        super().__init__(key, f"failed to parse {value!r} as {target_type}: {original_error}")


class ReportError(GroundloopError):
    pass


class IoError(ReportError):
    def __init__(self, path: Any, original_error: Optional[Exception] = None):
        self.path = path
        suffix = f": {original_error}" if original_error is not None else ""
        super().__init__(f"I/O failure on '{path}'{suffix}")


class EmptyReportError(ReportError):
    def __init__(self):
        super().__init__("Refusing to emit a report without rows")
