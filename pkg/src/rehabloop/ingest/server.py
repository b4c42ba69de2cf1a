"""Streaming engine server: one TCP connection == one session.

The client opens with a note or a pre-built constraint document, then
streams frame records; feedback events stream back on the same
connection. A heartbeat goes out after 5 s of silence. One connection's
protocol failure never touches another connection.
"""

from __future__ import annotations

import logging
import socketserver
import threading
import time
from typing import Callable, Optional

from ..constraints import ClinicalNote, ConstraintError, from_schema, validate
from ..feedback import FeedbackConfig
from ..session import (
    ConstraintsRejected,
    FrameQueue,
    NoConstraintsExtracted,
    PatientState,
    Session,
    SessionError,
    phase1,
)
from . import protocol

logger = logging.getLogger(__name__)

DEFAULT_HEARTBEAT_S = 5.0
DEFAULT_QUEUE_SIZE = 120


class BindFailure(OSError):
    pass


def default_session_factory(cfg: Optional[FeedbackConfig] = None,
                            extraction=None, synthesis=None) -> Callable:
    """Build sessions from an open record (note text or constraint doc)."""
    cfg = cfg or FeedbackConfig()

    def factory(open_record: dict) -> Session:
        if "note" in open_record:
            note = ClinicalNote(text=str(open_record["note"]),
                                note_id=str(open_record.get("note_id", "wire")))
            state = phase1(note, extraction=extraction, synthesis=synthesis)
        elif "constraints" in open_record:
            cset = from_schema(open_record["constraints"])
            report = validate(cset)
            if not report.ok:
                raise ConstraintsRejected(report)
            state = PatientState(
                session_id=f"s-{time.monotonic_ns():x}",
                started_at=time.time(),
                notes=ClinicalNote(text="", note_id=cset.source_note_id or "wire"),
                constraints=cset,
            )
        else:
            raise ConstraintError("open record needs 'note' or 'constraints'")
        return Session(state, cfg)

    return factory


class _ConnectionHandler(socketserver.StreamRequestHandler):
    def handle(self):
        server: EngineServer = self.server.engine  # type: ignore[attr-defined]
        try:
            self._run(server)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _send(self, line: str):
        self.wfile.write(line.encode("utf-8"))
        self.wfile.flush()
        self._last_write = time.monotonic()

    def _run(self, server: "EngineServer"):
        self._last_write = time.monotonic()
        first = self.rfile.readline()
        if not first:
            return
        try:
            record = protocol.loads(first)
            if record.get("type") != "open":
                raise protocol.MalformedRecord(
                    f"expected open record, got {record.get('type')!r}")
            session = server.session_factory(record)
        except (protocol.ProtocolError, ConstraintError, SessionError) as exc:
            self._send(protocol.encode_error(_error_code(exc), str(exc)))
            return
        self._send(protocol.encode_ready(session.state.session_id,
                                         session.state.video_url))

        queue = FrameQueue(
            server.queue_size,
            on_drop=lambda item: session.log_drop(
                getattr(item, "frame_id", None), getattr(item, "t_ms", None),
                "backpressure", "frame queue full, oldest dropped"),
        )
        fatal = []

        def read_loop():
            try:
                for raw in self.rfile:
                    try:
                        rec = protocol.loads(raw)
                    except protocol.ProtocolError as exc:
                        fatal.append(exc)
                        break
                    rtype = rec.get("type")
                    if rtype == "frame":
                        try:
                            queue.put(protocol.frame_from_record(rec))
                        except protocol.ProtocolError as exc:
                            fatal.append(exc)
                            break
                    # other record types from clients are ignored
            except (ConnectionResetError, OSError):
                pass
            finally:
                queue.close()

        reader = threading.Thread(target=read_loop, daemon=True)
        reader.start()

        poll_s = min(0.25, server.heartbeat_s / 4)
        while True:
            frame = queue.get(timeout=poll_s)
            if frame is not None:
                event = session.step(frame)
                if event is not None:
                    self._send(protocol.encode_event(event))
            elif queue.closed:
                break
            if time.monotonic() - self._last_write >= server.heartbeat_s:
                self._send(protocol.encode_heartbeat())
        if fatal:
            self._send(protocol.encode_error(_error_code(fatal[0]), str(fatal[0])))


def _error_code(exc: Exception) -> str:
    return {
        protocol.MalformedRecord: "malformed_record",
        protocol.UnknownLandmark: "unknown_landmark",
        protocol.RangeViolation: "range_violation",
        NoConstraintsExtracted: "no_constraints",
        ConstraintsRejected: "constraints_rejected",
    }.get(type(exc), "protocol_error")


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class EngineServer:
    """Bind an endpoint and serve sessions until shutdown."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 session_factory: Optional[Callable] = None,
                 heartbeat_s: float = DEFAULT_HEARTBEAT_S,
                 queue_size: int = DEFAULT_QUEUE_SIZE):
        self.session_factory = session_factory or default_session_factory()
        self.heartbeat_s = heartbeat_s
        self.queue_size = queue_size
        try:
            self._server = _TCPServer((host, port), _ConnectionHandler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
        self._server.engine = self  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple:
        return self._server.server_address

    def serve_forever(self):
        self._server.serve_forever(poll_interval=0.1)

    def start_background(self):
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def shutdown(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(endpoint: str, session_factory: Optional[Callable] = None,
          heartbeat_s: float = DEFAULT_HEARTBEAT_S) -> None:
    """Blocking server loop on 'host:port' until interrupted."""
    host, _, port = endpoint.rpartition(":")
    server = EngineServer(host or "127.0.0.1", int(port),
                          session_factory=session_factory,
                          heartbeat_s=heartbeat_s)
    logger.info("engine listening on %s:%s", *server.address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
