from .adapter import (
    AdapterBackend,
    AdapterDetector,
    AdapterEndpoint,
    AdapterSession,
    Transport,
    handshake,
    remote_detect,
    remote_generate,
)
from .base import DescriptionBackend, Detector
from .sim_backend import SimDetector, SimGenerator
from .wire import PROTOCOL_VERSION, WireMessage

__all__ = [
    "AdapterBackend",
    "AdapterDetector",
    "AdapterEndpoint",
    "AdapterSession",
    "Transport",
    "handshake",
    "remote_detect",
    "remote_generate",
    "DescriptionBackend",
    "Detector",
    "SimDetector",
    "SimGenerator",
    "PROTOCOL_VERSION",
    "WireMessage",
]
