"""Engine connection: newline-delimited JSON over TCP with auto-reconnect.

A manager thread owns the socket: it connects, sends the open record,
then reads records and timestamps them on receipt. Send failures and
EOFs flip the link to disconnected; reconnection backs off exponentially
(capped so a restarted engine is rejoined within a few seconds).
"""

from __future__ import annotations

import json
import queue
import socket
import threading
import time
from dataclasses import dataclass
from typing import Optional


class EngineUnreachable(RuntimeError):
    pass


@dataclass(frozen=True)
class Received:
    t_mono: float  # receipt timestamp (time.monotonic())
    record: dict


class EngineLink:
    def __init__(self, host: str, port: int, open_line: str,
                 backoff_initial_s: float = 0.25, backoff_max_s: float = 2.0,
                 auto_reconnect: bool = True, connect_timeout_s: float = 5.0):
        self.host = host
        self.port = port
        self.open_line = open_line
        self.backoff_initial_s = backoff_initial_s
        self.backoff_max_s = backoff_max_s
        self.auto_reconnect = auto_reconnect
        self.connect_timeout_s = connect_timeout_s

        self.received: "queue.Queue[Received]" = queue.Queue()
        self.video_url: Optional[str] = None
        self.session_id: Optional[str] = None
        self.connections = 0
        self.frames_sent = 0
        self.frames_skipped = 0

        self._sock: Optional[socket.socket] = None
        self._send_lock = threading.Lock()
        self._connected = threading.Event()
        self._stopping = threading.Event()
        self._thread: Optional[threading.Thread] = None

    # -- lifecycle -----------------------------------------------------------

    def start(self, wait_s: float = 5.0):
        """Start the manager thread; raises if the first connect times out."""
        self._thread = threading.Thread(target=self._manage, daemon=True)
        self._thread.start()
        if not self._connected.wait(timeout=wait_s):
            if not self.auto_reconnect:
                self.close()
                raise EngineUnreachable(
                    f"engine at {self.host}:{self.port} not reachable")

    def close(self):
        self._stopping.set()
        self._teardown()
        if self._thread is not None:
            self._thread.join(timeout=2)

    @property
    def connected(self) -> bool:
        return self._connected.is_set()

    # -- sending -------------------------------------------------------------

    def send_frame(self, line: str) -> bool:
        """Send one frame line; False when disconnected (frame skipped)."""
        with self._send_lock:
            sock = self._sock
            if sock is None or not self._connected.is_set():
                self.frames_skipped += 1
                return False
            try:
                sock.sendall(line.encode("utf-8"))
            except OSError:
                self._connected.clear()
                self.frames_skipped += 1
                return False
        self.frames_sent += 1
        return True

    def poll_events(self) -> list:
        """Drain received event records (with receipt timestamps)."""
        out = []
        while True:
            try:
                item = self.received.get_nowait()
            except queue.Empty:
                return out
            out.append(item)

    # -- manager thread ------------------------------------------------------

    def _manage(self):
        backoff = self.backoff_initial_s
        while not self._stopping.is_set():
            try:
                sock = socket.create_connection((self.host, self.port),
                                                timeout=self.connect_timeout_s)
            except OSError:
                if not self.auto_reconnect:
                    return
                time.sleep(backoff)
                backoff = min(backoff * 2, self.backoff_max_s)
                continue
            backoff = self.backoff_initial_s
            sock.settimeout(None)
            reader = sock.makefile("rb")
            with self._send_lock:
                self._sock = sock
            try:
                sock.sendall(self.open_line.encode("utf-8"))
                self.connections += 1
                self._connected.set()
                self._read_until_eof(reader)
            except OSError:
                pass
            finally:
                self._connected.clear()
                with self._send_lock:
                    self._sock = None
                try:
                    sock.close()
                except OSError:
                    pass
            if not self.auto_reconnect or self._stopping.is_set():
                return

    def _read_until_eof(self, reader):
        for raw in reader:
            try:
                record = json.loads(raw)
            except json.JSONDecodeError:
                continue
            rtype = record.get("type")
            if rtype == "ready":
                self.session_id = record.get("session_id")
                self.video_url = record.get("video_url")
            elif rtype in ("event", "error"):
                self.received.put(Received(time.monotonic(), record))
            # heartbeats and unknown record types are ignored

    def _teardown(self):
        with self._send_lock:
            if self._sock is not None:
                try:
                    self._sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                try:
                    self._sock.close()
                except OSError:
                    pass
                self._sock = None
        self._connected.clear()
