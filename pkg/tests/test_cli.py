import json

import pytest

from rehabloop.cli import (
    build_parser,
    effective_endpoint,
    effective_feedback_config,
    main,
    run_bench,
)
from rehabloop.feedback import FeedbackConfig

SHOULDER_NOTE = ("Patient recovering from rotator cuff tear. "
                "Max 90 deg shoulder abduction.")


@pytest.fixture
def note_file(tmp_path):
    path = tmp_path / "note1.txt"
    path.write_text(SHOULDER_NOTE, encoding="utf-8")
    return path


class TestParseCommand:
    def test_shoulder_note_fields(self, note_file, capsys):
        assert main(["parse", str(note_file), "--format", "line-json"]) == 0
        doc = json.loads(capsys.readouterr().out.strip())
        entry = doc["constraints"][0]
        assert entry["joint"] == "shoulder"
        assert entry["axis"] == "abduction"
        assert entry["max_angle"] == 90
        assert entry["urgency"] == "high"

    def test_empty_file_exits_2(self, tmp_path, capsys):
        empty = tmp_path / "empty.txt"
        empty.write_text("   ", encoding="utf-8")
        assert main(["parse", str(empty)]) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["parse", str(tmp_path / "nope.txt")]) == 2

    def test_line_json_two_notes_two_lines(self, tmp_path, capsys):
        a = tmp_path / "a.txt"
        b = tmp_path / "b.txt"
        a.write_text(SHOULDER_NOTE, encoding="utf-8")
        b.write_text("Max 45 deg knee flexion.", encoding="utf-8")
        assert main(["parse", str(a), str(b), "--format", "line-json"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        docs = [json.loads(line) for line in lines]
        assert docs[0]["constraints"][0]["joint"] == "shoulder"
        assert docs[1]["constraints"][0]["joint"] == "knee"


class TestSimulateCommand:
    def test_peak_90_zero_criticals(self, capsys):
        assert main(["simulate", "--peak", "90", "--period-ms", "2000",
                     "--format", "line-json"]) == 0
        records = [json.loads(l) for l in
                   capsys.readouterr().out.strip().splitlines()]
        events = [r for r in records if r.get("type") == "event"]
        summary = [r for r in records if r.get("type") == "summary"][0]
        assert summary["critical_violations"] == 0
        assert all(e["state"] != "CriticalViolation" for e in events)

    def test_peak_100_criticals(self, capsys):
        assert main(["simulate", "--peak", "100", "--period-ms", "2000",
                     "--reps", "2", "--format", "line-json"]) == 0
        records = [json.loads(l) for l in
                   capsys.readouterr().out.strip().splitlines()]
        summary = [r for r in records if r.get("type") == "summary"][0]
        assert summary["critical_violations"] >= 2

    def test_peak_60_encourages_only(self, capsys):
        assert main(["simulate", "--peak", "60", "--period-ms", "2000",
                     "--format", "line-json"]) == 0
        records = [json.loads(l) for l in
                   capsys.readouterr().out.strip().splitlines()]
        events = [r for r in records if r.get("type") == "event"]
        assert events
        assert {e["state"] for e in events} == {"UnderExtension"}

    def test_text_format(self, capsys):
        assert main(["simulate", "--peak", "90", "--period-ms", "2000"]) == 0
        out = capsys.readouterr().out
        assert "summary:" in out

    def test_unparseable_note_exits_2(self, capsys):
        assert main(["simulate", "--note", "hello there"]) == 2


class TestReplayCommand:
    def test_replay_recorded_file(self, tmp_path, capsys):
        from rehabloop.ingest import protocol
        from rehabloop.ingest.trajectory import TrajectorySpec, generate
        path = tmp_path / "rec.ndjson"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(protocol.encode_open_note(SHOULDER_NOTE))
            for frame in generate(TrajectorySpec(peak_angle_deg=100,
                                                 period_ms=1000, fps=30)):
                fh.write(protocol.encode_frame(frame))
        assert main(["replay", str(path), "--speed", "0",
                     "--format", "line-json"]) == 0
        records = [json.loads(l) for l in
                   capsys.readouterr().out.strip().splitlines()]
        assert any(r.get("state") == "CriticalViolation" for r in records
                   if r.get("type") == "event")
        assert records[-1]["type"] == "summary"

    def test_missing_open_record_needs_note(self, tmp_path, capsys):
        from rehabloop.ingest import protocol
        from rehabloop.ingest.trajectory import TrajectorySpec, generate
        path = tmp_path / "frames.ndjson"
        with open(path, "w", encoding="utf-8") as fh:
            for frame in generate(TrajectorySpec(period_ms=500, fps=10)):
                fh.write(protocol.encode_frame(frame))
        assert main(["replay", str(path)]) == 2
        assert main(["replay", str(path), "--note", SHOULDER_NOTE]) == 0


class TestBenchCommand:
    def test_zero_duration_empty_report(self, capsys):
        assert main(["bench", "--fps", "30", "--duration-s", "0",
                     "--format", "line-json"]) == 0
        report = json.loads(capsys.readouterr().out.strip())
        assert report["frames"] == 0
        assert report["dropped"] == 0

    def test_short_bench_meets_budget(self):
        report = run_bench(30.0, 2.0, FeedbackConfig())
        assert report["frames"] == 60
        assert report["achieved_fps"] >= 30.0
        assert report["latency_us"]["p95"] <= 5000.0
        assert report["dropped"] == 0


class TestContracts:
    def test_unknown_flag_is_an_error(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["parse", "x.txt", "--bogus"])
        assert exc.value.code == 2

    def test_unknown_subcommand_is_an_error(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["frobnicate"])
        assert exc.value.code == 2

    def test_endpoint_precedence(self, monkeypatch, tmp_path):
        parser = build_parser()
        args = parser.parse_args(["serve"])
        assert effective_endpoint(args, {}) == "127.0.0.1:7700"
        assert effective_endpoint(args, {"endpoint": "0.0.0.0:9"}) == "0.0.0.0:9"
        monkeypatch.setenv("REHAB_ENDPOINT", "10.0.0.1:7000")
        assert effective_endpoint(args, {"endpoint": "0.0.0.0:9"}) == \
            "10.0.0.1:7000"
        args = parser.parse_args(["serve", "--endpoint", "127.0.0.1:7100"])
        assert effective_endpoint(args, {"endpoint": "0.0.0.0:9"}) == \
            "127.0.0.1:7100"

    def test_feedback_config_precedence(self, tmp_path):
        parser = build_parser()
        args = parser.parse_args(["bench"])
        assert effective_feedback_config(args, {}).delta_deg == 5.0
        assert effective_feedback_config(args, {"delta_deg": 7.0}).delta_deg == 7.0
        args = parser.parse_args(["bench", "--delta-deg", "3"])
        assert effective_feedback_config(args, {"delta_deg": 7.0}).delta_deg == 3.0

    def test_config_file_via_env(self, monkeypatch, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"stability_frames": 1}), encoding="utf-8")
        monkeypatch.setenv("REHAB_CONFIG", str(cfg))
        assert main(["bench", "--fps", "30", "--duration-s", "0"]) == 0

    def test_bad_config_file_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1,2,3]", encoding="utf-8")
        assert main(["bench", "--duration-s", "0", "--config", str(cfg)]) == 2
