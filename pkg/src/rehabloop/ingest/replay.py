"""Feed recorded frame logs back through a session.

speed=0 replays as fast as possible (the determinism fixture); speed=1
reproduces the recorded inter-arrival timing.
"""

from __future__ import annotations

import logging
import time
from typing import Optional

from ..session import Session, SessionSummary
from . import protocol

logger = logging.getLogger(__name__)


class FileUnreadable(OSError):
    pass


def _read_lines(path: str) -> list:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    return data.splitlines(keepends=True)


def iter_records(path: str):
    """Yield (line_number, record) pairs; warn and stop on a truncated tail.

    A malformed line anywhere before the final one raises MalformedRecord
    naming the line.
    """
    lines = _read_lines(path)
    for i, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        truncated_tail = (i == len(lines) and not raw.endswith(b"\n"))
        try:
            record = protocol.loads(raw)
        except protocol.MalformedRecord as exc:
            if truncated_tail:
                logger.warning("%s: truncated final line ignored", path)
                return
            raise protocol.MalformedRecord(
                f"{path} line {i}: {exc}", offset=exc.offset) from exc
        yield i, record


def first_open_record(path: str) -> Optional[dict]:
    for _, record in iter_records(path):
        if record.get("type") == "open":
            return record
    return None


def replay(path: str, speed: float, sink: Session) -> SessionSummary:
    """Stream the file's frames into the sink session; returns its summary."""
    if speed < 0:
        raise ValueError("speed must be >= 0")
    start_wall = time.perf_counter()
    first_t: Optional[float] = None
    for lineno, record in iter_records(path):
        if record.get("type") != "frame":
            continue
        try:
            frame = protocol.frame_from_record(record)
        except protocol.ProtocolError as exc:
            raise protocol.MalformedRecord(f"{path} line {lineno}: {exc}") from exc
        if speed > 0:
            if first_t is None:
                first_t = frame.t_ms
            target = start_wall + (frame.t_ms - first_t) / 1000.0 / speed
            delay = target - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        sink.step(frame)
    return sink.summary()
