"""Frame ingestion: wire protocol, streaming server, replay, synthetic generator."""

from .protocol import (
    MalformedRecord,
    ProtocolError,
    RangeViolation,
    UnknownLandmark,
    decode_frame,
    encode_error,
    encode_event,
    encode_frame,
    encode_heartbeat,
    encode_open_constraints,
    encode_open_note,
    encode_ready,
)
from .replay import FileUnreadable, first_open_record, iter_records, replay
from .server import BindFailure, EngineServer, default_session_factory, serve
from .trajectory import TrajectorySpec, frame_at_angle, generate, generate_hold

__all__ = [
    "BindFailure",
    "EngineServer",
    "FileUnreadable",
    "MalformedRecord",
    "ProtocolError",
    "RangeViolation",
    "TrajectorySpec",
    "UnknownLandmark",
    "decode_frame",
    "default_session_factory",
    "encode_error",
    "encode_event",
    "encode_frame",
    "encode_heartbeat",
    "encode_open_constraints",
    "encode_open_note",
    "encode_ready",
    "first_open_record",
    "frame_at_angle",
    "generate",
    "generate_hold",
    "iter_records",
    "replay",
    "serve",
]
