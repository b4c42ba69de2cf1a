"""The client's two modes: live session streaming and landmark recording."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from .config import ClientConfig
from .display import Banner, HeadlessRenderer, make_speaker
from .net import EngineLink
from .sources import frame_record, open_record


@dataclass
class LiveStats:
    frames_sent: int = 0
    frames_skipped: int = 0
    events: int = 0
    reconnects: int = 0
    banner_latencies_ms: list = field(default_factory=list)


def run_live(config: ClientConfig, source, renderer=None,
             link: Optional[EngineLink] = None,
             max_frames: Optional[int] = None,
             require_connection: bool = True) -> LiveStats:
    """Stream landmark frames to the engine and render feedback live.

    The render loop runs at the capture rate; incoming events update the
    banner on the next tick. Only landmark records ever go on the wire.
    """
    renderer = renderer or HeadlessRenderer()
    host, port = config.host_port
    own_link = link is None
    if link is None:
        link = EngineLink(host, port, open_record(config.note()),
                          auto_reconnect=True)
        link.start(wait_s=5.0 if require_connection else 0.0)
    speak = make_speaker(config.tts)
    stats = LiveStats()
    banner = Banner()
    interval = 1.0 / config.target_fps
    next_tick = time.monotonic()
    try:
        for frame in source.frames():
            if max_frames is not None and stats.frames_sent >= max_frames:
                break
            delay = next_tick - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            next_tick += interval

            if link.send_frame(frame_record(frame)):
                stats.frames_sent += 1
            else:
                stats.frames_skipped += 1

            for received in link.poll_events():
                if received.record.get("type") != "event":
                    continue
                stats.events += 1
                banner.apply(received.record, received.t_mono)
                if speak is not None and banner.message:
                    speak(banner.message)

            renderer.draw(frame.landmarks, banner, link.connected,
                          video_url=link.video_url,
                          image=getattr(source, "last_image", None))
            if getattr(renderer, "quit_requested", False):
                break
    finally:
        stats.reconnects = max(0, link.connections - 1)
        if own_link:
            link.close()
        renderer.close()
        if hasattr(source, "close"):
            source.close()
    return stats


def record(source, output_path: str, max_frames: Optional[int] = None) -> int:
    """Write the source's frames as wire records, verbatim; no engine needed."""
    count = 0
    with open(output_path, "w", encoding="utf-8") as fh:
        for frame in source.frames():
            if max_frames is not None and count >= max_frames:
                break
            fh.write(frame_record(frame))
            count += 1
    if hasattr(source, "close"):
        source.close()
    return count
