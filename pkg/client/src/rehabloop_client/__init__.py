"""rehabloop-client: patient-facing live client for the rehabloop engine.

Captures pose landmarks locally (webcam + pose model, replay file, or a
synthetic demo source), streams them over the engine's wire protocol,
and renders corrective feedback as a color-coded banner. Pixels never
leave the device; only landmark records go on the wire.
"""

__version__ = "0.1.0"

from .app import LiveStats, record, run_live
from .config import CANONICAL_LANDMARKS, ClientConfig, ConfigError, load_mapping
from .display import Banner, HeadlessRenderer, SEVERITY_COLORS
from .net import EngineLink, EngineUnreachable
from .sources import (
    BackendUnavailable,
    CameraSource,
    CameraUnavailable,
    LandmarkFrame,
    ReplaySource,
    SyntheticSource,
    frame_record,
    open_record,
)
