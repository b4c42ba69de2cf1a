import json
import socket
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rehabloop.feedback import FeedbackConfig
from rehabloop.ingest import protocol
from rehabloop.ingest.replay import FileUnreadable, first_open_record, replay
from rehabloop.ingest.server import (
    BindFailure,
    EngineServer,
    default_session_factory,
)
from rehabloop.ingest.trajectory import TrajectorySpec, frame_at_angle, generate, generate_hold
from rehabloop.kinematics import CANONICAL_LANDMARKS, Landmark, PoseFrame, measure_joint, joint_def_for
from rehabloop.session import Session, phase1
from rehabloop.constraints import ClinicalNote

ABDUCTION = joint_def_for("shoulder", "abduction")


class TestProtocol:
    def test_decode_happy_path(self):
        frame = frame_at_angle(42.0, frame_id=7, t_ms=231.5)
        line = protocol.encode_frame(frame)
        decoded = protocol.decode_frame(line)
        assert decoded == frame
        assert len(decoded.landmarks) == 17

    def test_range_violation(self):
        line = json.dumps({"type": "frame", "frame_id": 0, "t_ms": 0,
                           "landmarks": [{"name": "nose", "x": 1.5, "y": 0.5,
                                          "z": 0, "visibility": 1}]})
        with pytest.raises(protocol.RangeViolation):
            protocol.decode_frame(line)

    def test_unknown_landmark(self):
        line = json.dumps({"type": "frame", "frame_id": 0, "t_ms": 0,
                           "landmarks": [{"name": "tail", "x": 0.5, "y": 0.5}]})
        with pytest.raises(protocol.UnknownLandmark):
            protocol.decode_frame(line)

    def test_duplicate_landmark_is_malformed(self):
        lm = {"name": "left_shoulder", "x": 0.5, "y": 0.5, "z": 0,
              "visibility": 1}
        line = json.dumps({"type": "frame", "frame_id": 0, "t_ms": 0,
                           "landmarks": [lm, dict(lm)]})
        with pytest.raises(protocol.MalformedRecord):
            protocol.decode_frame(line)

    def test_malformed_json_carries_offset(self):
        with pytest.raises(protocol.MalformedRecord) as exc:
            protocol.decode_frame(b'{"type": "frame", "frame_id": }')
        assert exc.value.offset > 0

    def test_non_finite_rejected(self):
        line = b'{"type":"frame","frame_id":0,"t_ms":NaN,"landmarks":[]}'
        with pytest.raises(protocol.MalformedRecord):
            protocol.decode_frame(line)

    def test_extra_fields_ignored(self):
        frame = frame_at_angle(10.0, 0, 0.0)
        record = json.loads(protocol.encode_frame(frame))
        record["camera"] = "front"
        record["landmarks"][0]["w"] = 1.0
        assert protocol.decode_frame(json.dumps(record)) == frame

    def test_wrong_type_rejected(self):
        with pytest.raises(protocol.MalformedRecord):
            protocol.decode_frame(b'{"type":"heartbeat"}')

    coords = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
    depths = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)

    @given(st.lists(st.sampled_from(CANONICAL_LANDMARKS), min_size=1,
                    max_size=17, unique=True),
           st.data())
    @settings(max_examples=80)
    def test_decode_encode_identity(self, names, data):
        landmarks = [
            Landmark(name,
                     x=data.draw(self.coords), y=data.draw(self.coords),
                     z=data.draw(self.depths),
                     visibility=data.draw(self.coords))
            for name in names
        ]
        frame = PoseFrame.from_landmarks(
            frame_id=data.draw(st.integers(0, 10**6)),
            t_ms=float(data.draw(st.integers(0, 10**9))),
            landmarks=landmarks)
        assert protocol.decode_frame(protocol.encode_frame(frame)) == frame


class TestGenerator:
    def test_theta_zero_at_start(self):
        spec = TrajectorySpec(peak_angle_deg=90, period_ms=4000, fps=30)
        first = next(generate(spec))
        assert first.t_ms == 0.0
        assert measure_joint(first, ABDUCTION).theta_deg == pytest.approx(0.0, abs=1e-9)

    def test_peak_at_half_period(self):
        spec = TrajectorySpec(peak_angle_deg=90, period_ms=4000, fps=30)
        frames = list(generate(spec))
        mid = frames[60]
        assert mid.t_ms == pytest.approx(2000.0)
        assert measure_joint(mid, ABDUCTION).theta_deg == pytest.approx(90.0, abs=1e-6)

    def test_noise_free_round_trip_every_frame(self):
        spec = TrajectorySpec(peak_angle_deg=120, period_ms=3000, fps=30,
                              repetitions=2)
        for k, frame in enumerate(generate(spec)):
            commanded = spec.angle_at(k * 1000.0 / 30)
            measured = measure_joint(frame, ABDUCTION).theta_deg
            assert measured == pytest.approx(commanded, abs=1e-6)

    def test_seed_determinism_byte_identical(self):
        spec = TrajectorySpec(peak_angle_deg=90, period_ms=2000, fps=30,
                              noise_sigma=0.01, seed=42)
        stream1 = b"".join(protocol.encode_frame(f).encode() for f in generate(spec))
        stream2 = b"".join(protocol.encode_frame(f).encode() for f in generate(spec))
        assert stream1 == stream2
        other = TrajectorySpec(peak_angle_deg=90, period_ms=2000, fps=30,
                               noise_sigma=0.01, seed=43)
        assert stream1 != b"".join(protocol.encode_frame(f).encode()
                                   for f in generate(other))

    def test_noisy_median_error_bounded(self):
        # quick version of the Table-repro margin check (full 10k in acceptance)
        errors = [abs(measure_joint(f, ABDUCTION).theta_deg - 60.0)
                  for f in generate_hold(60.0, count=2000, noise_sigma=0.005,
                                         seed=5)]
        assert float(np.median(errors)) <= 5.0

    def test_extreme_noise_stays_in_bounds(self):
        for frame in generate_hold(90.0, count=50, noise_sigma=0.2, seed=1):
            for lm in frame.landmarks.values():
                assert 0.0 <= lm.x <= 1.0 and 0.0 <= lm.y <= 1.0

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            TrajectorySpec(peak_angle_deg=0)
        with pytest.raises(ValueError):
            TrajectorySpec(fps=0)
        with pytest.raises(ValueError):
            TrajectorySpec(noise_sigma=-1)


NOTE = ClinicalNote("Max 90 deg shoulder abduction.", "replay")


def write_recording(path, spec, note_text="Max 90 deg shoulder abduction."):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(protocol.encode_open_note(note_text))
        for frame in generate(spec):
            fh.write(protocol.encode_frame(frame))


class TestReplay:
    def test_speed_zero_twice_identical(self, tmp_path):
        path = tmp_path / "rec.ndjson"
        spec = TrajectorySpec(peak_angle_deg=100, period_ms=2000, fps=30,
                              repetitions=2, noise_sigma=0.002, seed=3)
        write_recording(path, spec)

        def run():
            session = Session(phase1(NOTE, session_id="r"))
            summary = replay(str(path), 0, session)
            events = b"".join(protocol.encode_event(e).encode()
                              for e in session.events)
            return events, summary.to_json(include_timing=False)

        a, b = run(), run()
        assert a == b

    def test_truncated_last_line_warns_and_summarizes(self, tmp_path, caplog):
        path = tmp_path / "trunc.ndjson"
        spec = TrajectorySpec(peak_angle_deg=90, period_ms=1000, fps=30)
        write_recording(path, spec)
        with open(path, "rb+") as fh:
            fh.seek(0, 2)
            fh.truncate(fh.tell() - 40)  # cut into the final record
        session = Session(phase1(NOTE, session_id="t"))
        import logging
        with caplog.at_level(logging.WARNING):
            summary = replay(str(path), 0, session)
        assert summary.frames == spec.frame_count - 1
        assert any("truncated" in r.message for r in caplog.records)

    def test_malformed_middle_line_names_line(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        spec = TrajectorySpec(peak_angle_deg=90, period_ms=1000, fps=30)
        write_recording(path, spec)
        lines = path.read_bytes().splitlines(keepends=True)
        lines[3] = b'{"type":"frame", broken\n'
        path.write_bytes(b"".join(lines))
        session = Session(phase1(NOTE, session_id="m"))
        with pytest.raises(protocol.MalformedRecord) as exc:
            replay(str(path), 0, session)
        assert "line 4" in str(exc.value)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(FileUnreadable):
            replay(str(tmp_path / "missing.ndjson"), 0,
                   Session(phase1(NOTE)))

    def test_first_open_record(self, tmp_path):
        path = tmp_path / "rec.ndjson"
        write_recording(path, TrajectorySpec(period_ms=500, fps=10))
        record = first_open_record(str(path))
        assert record["type"] == "open"
        assert "shoulder" in record["note"]

    def test_speed_one_respects_recorded_timing(self, tmp_path):
        path = tmp_path / "timed.ndjson"
        spec = TrajectorySpec(peak_angle_deg=90, period_ms=1200, fps=30)
        write_recording(path, spec)
        session = Session(phase1(NOTE, session_id="w"))
        start = time.perf_counter()
        replay(str(path), 1.0, session)
        elapsed = time.perf_counter() - start
        recorded = (spec.frame_count - 1) / spec.fps
        assert elapsed >= recorded * 0.98
        assert elapsed <= recorded * 1.35


def open_client(port):
    sock = socket.create_connection(("127.0.0.1", port), timeout=5)
    return sock, sock.makefile("rwb")


def send_line(fh, line: str):
    fh.write(line.encode("utf-8"))
    fh.flush()


def read_record(fh):
    raw = fh.readline()
    return None if not raw else json.loads(raw)


@pytest.fixture
def server():
    srv = EngineServer("127.0.0.1", 0,
                       session_factory=default_session_factory(FeedbackConfig()),
                       heartbeat_s=5.0)
    srv.start_background()
    yield srv
    srv.shutdown()


class TestServer:
    def test_session_over_the_wire(self, server):
        sock, fh = open_client(server.address[1])
        try:
            send_line(fh, protocol.encode_open_note(
                "Max 90 deg shoulder abduction."))
            ready = read_record(fh)
            assert ready["type"] == "ready"
            assert ready["video_url"].startswith("mock://")
            spec = TrajectorySpec(peak_angle_deg=100, period_ms=2000, fps=30)
            for frame in generate(spec):
                send_line(fh, protocol.encode_frame(frame))
            sock.shutdown(socket.SHUT_WR)
            records = []
            while True:
                record = read_record(fh)
                if record is None:
                    break
                records.append(record)
            events = [r for r in records if r["type"] == "event"]
            assert any(e["state"] == "CriticalViolation" for e in events)
            critical = next(e for e in events if e["state"] == "CriticalViolation")
            assert critical["message"] == \
                "Warning: Arm is too high. Lower to avoid strain."
            assert critical["violated_constraint_id"].endswith("shoulder:abduction")
        finally:
            sock.close()

    def test_malformed_first_record_errors_and_server_survives(self, server):
        sock, fh = open_client(server.address[1])
        send_line(fh, "this is not json\n")
        record = read_record(fh)
        assert record["type"] == "error"
        assert record["code"] == "malformed_record"
        assert read_record(fh) is None  # connection closed
        sock.close()
        # server still accepts a fresh, valid session
        self.test_session_over_the_wire(server)

    def test_open_with_prebuilt_constraints(self, server):
        from rehabloop.constraints import parse_note, to_schema
        doc = to_schema(parse_note(ClinicalNote(
            "Max 45 deg knee flexion.", "doc")))
        sock, fh = open_client(server.address[1])
        send_line(fh, protocol.encode_open_constraints(doc))
        ready = read_record(fh)
        assert ready["type"] == "ready"
        sock.close()

    def test_two_concurrent_clients_no_crosstalk(self, server):
        spec = TrajectorySpec(peak_angle_deg=100, period_ms=2000, fps=30)
        frames = list(generate(spec))
        sock_a, fh_a = open_client(server.address[1])
        sock_b, fh_b = open_client(server.address[1])
        try:
            send_line(fh_a, protocol.encode_open_note(
                "Max 90 deg shoulder abduction."))
            send_line(fh_b, protocol.encode_open_note(
                "Restrict the left shoulder abduction to 60 deg."))
            assert read_record(fh_a)["type"] == "ready"
            assert read_record(fh_b)["type"] == "ready"
            for frame in frames:
                send_line(fh_a, protocol.encode_frame(frame))
                send_line(fh_b, protocol.encode_frame(frame))
            sock_a.shutdown(socket.SHUT_WR)
            sock_b.shutdown(socket.SHUT_WR)

            def drain(fh):
                out = []
                while True:
                    record = read_record(fh)
                    if record is None:
                        return out
                    if record["type"] == "event":
                        out.append(record)
            events_a, events_b = drain(fh_a), drain(fh_b)
            ids_a = {e["violated_constraint_id"] for e in events_a}
            ids_b = {e["violated_constraint_id"] for e in events_b}
            assert all(":shoulder:" in i for i in ids_a)
            assert all(":left_shoulder:" in i for i in ids_b)
            assert ids_a.isdisjoint(ids_b)
        finally:
            sock_a.close()
            sock_b.close()

    def test_heartbeat_on_silence(self):
        srv = EngineServer("127.0.0.1", 0, heartbeat_s=0.3)
        srv.start_background()
        try:
            sock, fh = open_client(srv.address[1])
            send_line(fh, protocol.encode_open_note(
                "Max 90 deg shoulder abduction."))
            assert read_record(fh)["type"] == "ready"
            record = read_record(fh)  # no frames sent: next record is a heartbeat
            assert record == {"type": "heartbeat"}
            sock.close()
        finally:
            srv.shutdown()

    def test_bind_failure(self, server):
        with pytest.raises(BindFailure):
            EngineServer("127.0.0.1", server.address[1])

    def test_open_with_unparseable_note_errors(self, server):
        sock, fh = open_client(server.address[1])
        send_line(fh, protocol.encode_open_note("Nothing clinical here."))
        record = read_record(fh)
        assert record["type"] == "error"
        assert record["code"] == "no_constraints"
        sock.close()


class TestBackpressure:
    def test_drop_oldest_when_consumer_stalls(self):
        from rehabloop.session import FrameQueue
        dropped = []
        q = FrameQueue(maxsize=5, on_drop=dropped.append)
        for i in range(12):
            q.put(i)
        assert len(dropped) == 7
        assert dropped == list(range(7))  # oldest first
        remaining = [q.get(timeout=0.01) for _ in range(5)]
        assert remaining == [7, 8, 9, 10, 11]

    def test_slow_session_logs_backpressure_drops(self):
        # artificially slow consumer: the 300-FPS stress case in miniature
        state = phase1(NOTE, session_id="bp")
        session = Session(state)
        from rehabloop.session import FrameQueue
        queue = FrameQueue(4, on_drop=lambda f: session.log_drop(
            f.frame_id, f.t_ms, "backpressure", "queue full"))
        for frame in generate(TrajectorySpec(peak_angle_deg=90, period_ms=1000,
                                             fps=60)):
            queue.put(frame)
        queue.close()
        while True:
            frame = queue.get(timeout=0.01)
            if frame is None:
                break
            session.step(frame)
        drops = [r for r in session.log.records() if r["type"] == "drop"]
        assert drops and all(r["reason"] == "backpressure" for r in drops)
        assert session.summary().dropped == len(drops)
