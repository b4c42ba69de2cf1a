"""Patient-facing CLI: run a live session or record a landmark file."""

from __future__ import annotations

import argparse
import sys

from .app import record, run_live
from .config import ClientConfig, ConfigError
from .display import HeadlessRenderer
from .net import EngineUnreachable
from .sources import (
    BackendUnavailable,
    CameraSource,
    CameraUnavailable,
    ReplaySource,
    SyntheticSource,
)


def _make_source(args, config: ClientConfig):
    if getattr(args, "replay", None):
        return ReplaySource(args.replay)
    if getattr(args, "synthetic", False):
        return SyntheticSource(fps=config.target_fps,
                               count=args.count if args.count else 150)
    if getattr(args, "no_camera", False):
        raise ConfigError("--no-camera needs --replay FILE or --synthetic")
    return CameraSource(config.camera_index, config.mapping,
                        target_fps=config.target_fps)


def cmd_live(args) -> int:
    config = ClientConfig(
        endpoint=args.endpoint, camera_index=args.camera,
        target_fps=args.fps, mapping_path=args.mapping,
        skeleton_overlay=not args.no_overlay,
        banner_position=args.banner_pos, tts=args.tts,
        note_text=args.note, note_path=args.note_file)
    source = _make_source(args, config)
    if args.headless:
        renderer = HeadlessRenderer()
    else:
        from .display import OpenCVRenderer
        renderer = OpenCVRenderer(overlay=config.skeleton_overlay,
                                  banner_position=config.banner_position)
    stats = run_live(config, source, renderer,
                     max_frames=args.count if args.count else None)
    print(f"sent={stats.frames_sent} skipped={stats.frames_skipped} "
          f"events={stats.events} reconnects={stats.reconnects}")
    return 0


def cmd_record(args) -> int:
    config = ClientConfig(endpoint="127.0.0.1:0", camera_index=args.camera,
                          target_fps=args.fps, mapping_path=args.mapping,
                          note_text="unused")
    source = _make_source(args, config)
    count = record(source, args.output,
                   max_frames=args.count if args.count else None)
    print(f"wrote {count} frame records to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rehab-client",
        description="Live rehabilitation client: capture, stream, coach")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("live", help="run an interactive session")
    p.add_argument("--endpoint", default="127.0.0.1:7700")
    p.add_argument("--note", default=None, help="prescription text")
    p.add_argument("--note-file", default=None)
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--no-camera", action="store_true")
    p.add_argument("--replay", default=None,
                   help="stream a recorded landmark file instead of the webcam")
    p.add_argument("--synthetic", action="store_true",
                   help="built-in demo motion, no camera needed")
    p.add_argument("--fps", type=float, default=15.0)
    p.add_argument("--count", type=int, default=None,
                   help="stop after this many frames")
    p.add_argument("--mapping", default=None,
                   help="landmark-model index mapping file")
    p.add_argument("--no-overlay", action="store_true")
    p.add_argument("--banner-pos", choices=["top", "bottom"], default="top")
    p.add_argument("--tts", action="store_true", help="speak feedback aloud")
    p.add_argument("--headless", action="store_true",
                   help="no window; print-only (for servers and tests)")
    p.set_defaults(func=cmd_live)

    p = sub.add_parser("record", help="record a landmark log file")
    p.add_argument("--output", required=True)
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--no-camera", action="store_true")
    p.add_argument("--replay", default=None)
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--fps", type=float, default=15.0)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--mapping", default=None)
    p.set_defaults(func=cmd_record)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CameraUnavailable, BackendUnavailable, EngineUnreachable,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
