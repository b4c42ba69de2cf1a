"""Scripted engine for client tests: a bare socket server speaking the
wire protocol with programmable behaviors (canned events, mid-session
disconnects, byte capture). Deliberately independent of both packages."""

from __future__ import annotations

import json
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Optional


def _line(record: dict) -> bytes:
    return (json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n") \
        .encode("utf-8")


@dataclass
class ConnectionTrace:
    opened_mono: float
    raw_lines: list = field(default_factory=list)
    open_record: Optional[dict] = None
    frames: int = 0
    closed_mono: Optional[float] = None


class ScriptedEngine:
    """Accepts sessions; optionally fires an event after chosen frames and
    can hang up after N frames on the first connection."""

    def __init__(self, event_on_frames=(), close_first_connection_after=None,
                 event_message="scripted feedback", severity="praise",
                 state="Optimal"):
        self.event_on_frames = set(event_on_frames)
        self.close_first_connection_after = close_first_connection_after
        self.event_message = event_message
        self.severity = severity
        self.state = state
        self.traces: list = []
        self.event_sent_mono: dict = {}  # frame counter -> send time
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen(8)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    @property
    def port(self) -> int:
        return self._sock.getsockname()[1]

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass

    def _serve(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._handle, args=(conn,),
                             daemon=True).start()

    def _handle(self, conn: socket.socket):
        trace = ConnectionTrace(opened_mono=time.monotonic())
        self.traces.append(trace)
        is_first = len(self.traces) == 1
        reader = conn.makefile("rb")
        try:
            raw = reader.readline()
            if not raw:
                return
            trace.raw_lines.append(raw)
            trace.open_record = json.loads(raw)
            conn.sendall(_line({"type": "ready", "session_id": "scripted",
                                "video_url": "mock://scripted"}))
            for raw in reader:
                trace.raw_lines.append(raw)
                record = json.loads(raw)
                if record.get("type") != "frame":
                    continue
                trace.frames += 1
                if trace.frames in self.event_on_frames:
                    self.event_sent_mono[trace.frames] = time.monotonic()
                    conn.sendall(_line({
                        "type": "event",
                        "frame_id": record["frame_id"],
                        "t_ms": record["t_ms"],
                        "state": self.state,
                        "message": f"{self.event_message} #{trace.frames}",
                        "severity": self.severity,
                        "theta_deg": None,
                        "violated_constraint_id": "scripted:c",
                    }))
                if (is_first and self.close_first_connection_after is not None
                        and trace.frames >= self.close_first_connection_after):
                    break
        except (OSError, json.JSONDecodeError):
            pass
        finally:
            trace.closed_mono = time.monotonic()
            try:
                conn.close()
            except OSError:
                pass
