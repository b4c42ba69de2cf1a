"""Operator command surface: parse notes, simulate sessions, serve, replay, bench.

Exit codes: 0 success, 1 runtime error, 2 input/parse error. Config
precedence: flags > environment (REHAB_ENDPOINT, REHAB_CONFIG) > config
file > defaults. Every subcommand takes --format line-json for
machine-consumable output, one self-describing JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import threading
import time
from pathlib import Path

from .constraints import ClinicalNote, ConstraintError, parse_note, to_json, to_schema
from .feedback import FeedbackConfig
from .ingest import protocol
from .ingest.replay import FileUnreadable, first_open_record, replay
from .ingest.server import BindFailure, serve
from .ingest.trajectory import TrajectorySpec, generate
from .providers import ProviderUnavailable
from .session import FrameQueue, Session, SessionError, phase1, summarize

DEFAULT_ENDPOINT = "127.0.0.1:7700"

INPUT_ERRORS = (ConstraintError, SessionError, protocol.ProtocolError,
                FileUnreadable, FileNotFoundError, IsADirectoryError, ValueError)

FEEDBACK_FIELDS = ("delta_deg", "optimal_band_deg", "under_band_deg",
                   "stability_frames", "min_message_interval_ms",
                   "critical_bypasses_debounce")


def _load_config_file(args) -> dict:
    path = args.config or os.environ.get("REHAB_CONFIG")
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def effective_feedback_config(args, file_cfg: dict) -> FeedbackConfig:
    values = {}
    for name in FEEDBACK_FIELDS:
        if name in file_cfg:
            values[name] = file_cfg[name]
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return FeedbackConfig(**values)


def effective_endpoint(args, file_cfg: dict) -> str:
    if getattr(args, "endpoint", None):
        return args.endpoint
    env = os.environ.get("REHAB_ENDPOINT")
    if env:
        return env
    return file_cfg.get("endpoint", DEFAULT_ENDPOINT)


def _emit(args, obj: dict, text: str):
    if args.format == "line-json":
        print(json.dumps(obj, sort_keys=True, ensure_ascii=False,
                         separators=(",", ":")))
    else:
        print(text)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_parse(args, file_cfg) -> int:
    for path in args.notes:
        text = Path(path).read_text(encoding="utf-8")
        cset = parse_note(ClinicalNote(text=text, note_id=Path(path).stem))
        if args.format == "line-json":
            print(to_json(cset))
        else:
            print(json.dumps(to_schema(cset), indent=2, ensure_ascii=False,
                             sort_keys=True))
    return 0


def _event_text(event) -> str:
    message = event.message or ""
    return f"[{event.state.value}] frame={event.frame_id} t={event.t_ms:.0f}ms {message}".rstrip()


def _print_summary(args, summary):
    doc = {"type": "summary", **summary.to_dict()}
    lines = ["summary:"]
    for key, value in summary.to_dict().items():
        lines.append(f"  {key}: {value}")
    _emit(args, doc, "\n".join(lines))


def cmd_simulate(args, file_cfg) -> int:
    cfg = effective_feedback_config(args, file_cfg)
    if args.note_file:
        text = Path(args.note_file).read_text(encoding="utf-8")
        note = ClinicalNote(text=text, note_id=Path(args.note_file).stem)
    else:
        note = ClinicalNote(text=args.note, note_id="cli")
    state = phase1(note)
    session = Session(state, cfg)
    spec = TrajectorySpec(peak_angle_deg=args.peak, period_ms=args.period_ms,
                          repetitions=args.reps, fps=args.fps,
                          noise_sigma=args.noise_sigma, seed=args.seed)
    for frame in generate(spec):
        event = session.step(frame)
        if event is not None:
            if args.format == "line-json":
                sys.stdout.write(protocol.encode_event(event))
            else:
                print(_event_text(event))
    _print_summary(args, session.summary())
    return 0


def cmd_serve(args, file_cfg) -> int:
    endpoint = effective_endpoint(args, file_cfg)
    serve(endpoint)
    return 0


def cmd_replay(args, file_cfg) -> int:
    cfg = effective_feedback_config(args, file_cfg)
    open_record = first_open_record(args.log)
    if open_record is None:
        if not args.note:
            raise ValueError(
                "log has no open record; pass --note to supply constraints")
        open_record = {"type": "open", "note": args.note}
    from .ingest.server import default_session_factory
    session = default_session_factory(cfg)(open_record)
    summary = replay(args.log, args.speed, session)
    for event in session.events:
        if args.format == "line-json":
            sys.stdout.write(protocol.encode_event(event))
        else:
            print(_event_text(event))
    _print_summary(args, summary)
    return 0


def run_bench(fps: float, duration_s: float, cfg: FeedbackConfig,
              note_text: str = "Max 90 deg shoulder abduction.",
              queue_size: int = 120) -> dict:
    """Drive paced synthetic frames through a full session; report latency.

    The producer paces frames against absolute deadlines; when it outruns
    the engine the frame queue drops oldest (logged by the session).
    """
    report = {"type": "bench_report", "requested_fps": fps,
              "duration_s": duration_s, "frames": 0, "dropped": 0,
              "achieved_fps": 0.0,
              "latency_us": {"mean": 0.0, "p95": 0.0, "max": 0.0}}
    total = int(round(fps * duration_s))
    if total <= 0:
        return report
    state = phase1(ClinicalNote(text=note_text, note_id="bench"))
    session = Session(state, cfg)
    spec = TrajectorySpec(peak_angle_deg=80.0, period_ms=4000.0,
                          repetitions=max(1, math.ceil(duration_s * 1000 / 4000)),
                          fps=fps)
    frames = []
    for frame in generate(spec):
        if len(frames) >= total:
            break
        frames.append(frame)

    queue = FrameQueue(queue_size, on_drop=lambda f: session.log_drop(
        f.frame_id, f.t_ms, "backpressure", "bench queue full"))

    def produce():
        start = time.perf_counter()
        for k, frame in enumerate(frames):
            delay = start + k / fps - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            queue.put(frame)
        queue.close()

    producer = threading.Thread(target=produce, daemon=True)
    t_start = time.perf_counter()
    t_last = t_start
    producer.start()
    processed = 0
    while True:
        frame = queue.get(timeout=0.25)
        if frame is None:
            if queue.closed:
                break
            continue
        session.step(frame)
        t_last = time.perf_counter()
        processed += 1
    elapsed = t_last - t_start
    producer.join()

    summary = summarize(session.log)
    report.update({
        "frames": summary.frames,
        "dropped": summary.dropped,
        "achieved_fps": summary.frames / elapsed if elapsed > 0 else 0.0,
        "latency_us": {"mean": summary.latency_mean_us,
                       "p95": summary.latency_p95_us,
                       "max": summary.latency_max_us},
    })
    return report


def cmd_bench(args, file_cfg) -> int:
    cfg = effective_feedback_config(args, file_cfg)
    report = run_bench(args.fps, args.duration_s, cfg)
    text = "\n".join([
        "bench report:",
        f"  requested_fps: {report['requested_fps']}",
        f"  duration_s: {report['duration_s']}",
        f"  frames: {report['frames']}",
        f"  dropped: {report['dropped']}",
        f"  achieved_fps: {report['achieved_fps']:.2f}",
        f"  latency_us mean={report['latency_us']['mean']:.1f} "
        f"p95={report['latency_us']['p95']:.1f} "
        f"max={report['latency_us']['max']:.1f}",
    ])
    _emit(args, report, text)
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--format", choices=["text", "line-json"], default="text",
                   help="output format (line-json: one object per line)")
    p.add_argument("--config", default=None,
                   help="config file (also via REHAB_CONFIG)")


def _add_feedback_flags(p: argparse.ArgumentParser):
    p.add_argument("--delta-deg", dest="delta_deg", type=float, default=None)
    p.add_argument("--optimal-band-deg", dest="optimal_band_deg", type=float,
                   default=None)
    p.add_argument("--under-band-deg", dest="under_band_deg", type=float,
                   default=None)
    p.add_argument("--stability-frames", dest="stability_frames", type=int,
                   default=None)
    p.add_argument("--min-message-interval-ms", dest="min_message_interval_ms",
                   type=float, default=None)
    p.add_argument("--no-critical-bypass", dest="critical_bypasses_debounce",
                   action="store_const", const=False, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rehabloop",
        description="Deterministic rehabilitation feedback engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="extract constraints from note files")
    p.add_argument("notes", nargs="+", help="prescription text files")
    _add_common(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("simulate",
                       help="run a synthetic trajectory through a session")
    p.add_argument("--note", default="Max 90 deg shoulder abduction.")
    p.add_argument("--note-file", default=None)
    p.add_argument("--peak", type=float, default=90.0)
    p.add_argument("--period-ms", dest="period_ms", type=float, default=4000.0)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    _add_feedback_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the streaming engine server")
    p.add_argument("--endpoint", default=None,
                   help="host:port (also via REHAB_ENDPOINT)")
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="replay a recorded frame log")
    p.add_argument("log", help="newline-delimited record file")
    p.add_argument("--speed", type=float, default=0.0,
                   help="0 = as fast as possible, 1 = recorded timing")
    p.add_argument("--note", default=None,
                   help="note text when the log has no open record")
    _add_feedback_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("bench", help="throughput/latency benchmark")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--duration-s", dest="duration_s", type=float, default=10.0)
    _add_feedback_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = _load_config_file(args)
        return args.func(args, file_cfg)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BindFailure, ProviderUnavailable, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
