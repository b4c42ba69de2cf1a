"""Wire format: UTF-8, one JSON object per newline-terminated line.

Record types: open, frame, event, error, heartbeat, plus a ready record
the server answers an open with. Decoders ignore fields and record types
they do not know, so the protocol can grow without breaking old clients.
"""

from __future__ import annotations

import json
import math
from typing import Union

from ..kinematics import (
    CoordinateOutOfRange,
    Landmark,
    LandmarkError,
    PoseFrame,
    UnknownLandmarkName,
)

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    """Base class for wire-level failures."""


class MalformedRecord(ProtocolError):
    """Line is not a valid record; carries the byte offset where parsing failed."""

    def __init__(self, detail: str, offset: int = 0):
        self.offset = offset
        super().__init__(f"{detail} (byte offset {offset})")


class UnknownLandmark(ProtocolError):
    pass


class RangeViolation(ProtocolError):
    pass


def dumps(record: dict) -> str:
    """Canonical one-line serialization (sorted keys, compact separators)."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"), allow_nan=False) + "\n"


def loads(line: Union[bytes, str]) -> dict:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedRecord("invalid UTF-8", offset=exc.start) from exc
    try:
        record = json.loads(line, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(exc.msg, offset=exc.pos) from exc
    except ValueError as exc:  # NaN/Infinity literals
        raise MalformedRecord(str(exc)) from exc
    if not isinstance(record, dict):
        raise MalformedRecord("record must be a JSON object")
    return record


def _reject_constant(name):
    raise ValueError(f"non-finite constant {name} not allowed")


def encode_frame(frame: PoseFrame) -> str:
    return dumps({
        "type": "frame",
        "frame_id": frame.frame_id,
        "t_ms": frame.t_ms,
        "landmarks": [
            {"name": lm.name, "x": lm.x, "y": lm.y, "z": lm.z,
             "visibility": lm.visibility}
            for lm in (frame.landmarks[n] for n in sorted(frame.landmarks))
        ],
    })


def decode_frame(line: Union[bytes, str]) -> PoseFrame:
    """Decode one frame record into a validated PoseFrame.

    Unknown landmark names and out-of-range coordinates are rejected;
    extra fields on the record or its landmarks are ignored.
    """
    record = loads(line)
    if record.get("type") != "frame":
        raise MalformedRecord(f"expected frame record, got {record.get('type')!r}")
    return frame_from_record(record)


def frame_from_record(record: dict) -> PoseFrame:
    try:
        frame_id = int(record["frame_id"])
        t_ms = float(record["t_ms"])
        raw = record["landmarks"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"bad frame header: {exc}") from exc
    if not math.isfinite(t_ms):
        raise MalformedRecord("t_ms is not finite")
    if not isinstance(raw, list):
        raise MalformedRecord("landmarks must be an array")
    landmarks = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise MalformedRecord(f"landmarks[{i}] must be an object")
        try:
            lm = Landmark(
                name=str(entry["name"]),
                x=float(entry["x"]),
                y=float(entry["y"]),
                z=float(entry.get("z", 0.0)),
                visibility=float(entry.get("visibility", 1.0)),
            )
        except UnknownLandmarkName as exc:
            raise UnknownLandmark(str(exc)) from exc
        except CoordinateOutOfRange as exc:
            raise RangeViolation(str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"landmarks[{i}]: {exc}") from exc
        landmarks.append(lm)
    try:
        return PoseFrame.from_landmarks(frame_id=frame_id, t_ms=t_ms,
                                        landmarks=landmarks)
    except LandmarkError as exc:  # duplicate names
        raise MalformedRecord(str(exc)) from exc


def encode_open_note(text: str) -> str:
    return dumps({"type": "open", "note": text})


def encode_open_constraints(schema_doc: dict) -> str:
    return dumps({"type": "open", "constraints": schema_doc})


def encode_event(event) -> str:
    """Serialize a feedback event record from a FeedbackEvent."""
    return dumps({
        "type": "event",
        "frame_id": event.frame_id,
        "t_ms": event.t_ms,
        "state": event.state.value,
        "message": event.message,
        "theta_deg": event.theta_deg,
        "violated_constraint_id": event.violated_constraint_id,
        "severity": event.severity.value,
    })


def encode_error(code: str, detail: str) -> str:
    return dumps({"type": "error", "code": code, "detail": detail})


def encode_heartbeat() -> str:
    return dumps({"type": "heartbeat"})


def encode_ready(session_id: str, video_url=None) -> str:
    return dumps({"type": "ready", "session_id": session_id,
                  "video_url": video_url})
