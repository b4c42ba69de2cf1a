"""On-screen feedback rendering: coaching banner + skeleton overlay.

Severity drives the banner color: stop=red, pace=amber, encourage=blue,
praise=green; silent states show nothing. A headless renderer records
every draw with timestamps so display latency is testable without a GUI.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

SEVERITY_COLORS = {
    "stop": (0, 0, 255),        # red (BGR)
    "pace": (0 , 191, 255),     # amber
    "encourage": (255, 128, 0),  # blue
    "praise": (0, 200, 0),      # green
}

SKELETON_EDGES = (
    ("left_shoulder", "right_shoulder"),
    ("left_shoulder", "left_elbow"), ("left_elbow", "left_wrist"),
    ("right_shoulder", "right_elbow"), ("right_elbow", "right_wrist"),
    ("left_shoulder", "left_hip"), ("right_shoulder", "right_hip"),
    ("left_hip", "right_hip"),
    ("left_hip", "left_knee"), ("left_knee", "left_ankle"),
    ("right_hip", "right_knee"), ("right_knee", "right_ankle"),
    ("left_ankle", "left_heel"), ("left_heel", "left_foot_index"),
    ("right_ankle", "right_heel"), ("right_heel", "right_foot_index"),
)


@dataclass
class Banner:
    message: Optional[str] = None
    severity: Optional[str] = None
    received_mono: Optional[float] = None  # when the event arrived

    def apply(self, record: dict, received_mono: float):
        severity = record.get("severity")
        if severity == "silent":
            return
        self.message = record.get("message")
        self.severity = severity
        self.received_mono = received_mono

    @property
    def color(self):
        return SEVERITY_COLORS.get(self.severity or "", (255, 255, 255))


@dataclass
class DrawCall:
    t_mono: float
    message: Optional[str]
    severity: Optional[str]
    banner_received_mono: Optional[float]
    connected: bool


class HeadlessRenderer:
    """Records draw calls instead of painting; the test and server-side
    deployment surface."""

    def __init__(self):
        self.draws: list = []

    def draw(self, landmarks, banner: Banner, connected: bool,
             video_url: Optional[str] = None, image=None):
        self.draws.append(DrawCall(
            t_mono=time.monotonic(),
            message=banner.message,
            severity=banner.severity,
            banner_received_mono=banner.received_mono,
            connected=connected,
        ))

    def close(self):
        pass


class OpenCVRenderer:
    """Camera-feed window with skeleton overlay and the coaching banner."""

    def __init__(self, window: str = "rehabloop", overlay: bool = True,
                 banner_position: str = "top", size=(640, 480)):
        try:
            import cv2
        except ImportError as exc:
            raise RuntimeError("opencv is not installed; use --headless or "
                               "install rehabloop-client[camera]") from exc
        self.cv2 = cv2
        self.window = window
        self.overlay = overlay
        self.banner_position = banner_position
        self.size = size
        self.quit_requested = False

    def draw(self, landmarks, banner: Banner, connected: bool,
             video_url: Optional[str] = None, image=None):
        import numpy as np
        cv2 = self.cv2
        w, h = self.size
        canvas = image if image is not None else np.zeros((h, w, 3), np.uint8)
        points = {lm["name"]: (int(lm["x"] * w), int(lm["y"] * h))
                  for lm in (landmarks or ())}
        if self.overlay:
            for a, b in SKELETON_EDGES:
                if a in points and b in points:
                    cv2.line(canvas, points[a], points[b], (200, 200, 200), 2)
            for p in points.values():
                cv2.circle(canvas, p, 3, (255, 255, 255), -1)
        if banner.message:
            y0 = 0 if self.banner_position == "top" else h - 40
            cv2.rectangle(canvas, (0, y0), (w, y0 + 40), banner.color, -1)
            cv2.putText(canvas, banner.message, (8, y0 + 27),
                        cv2.FONT_HERSHEY_SIMPLEX, 0.6, (255, 255, 255), 2)
        if not connected:
            cv2.putText(canvas, "disconnected - retrying", (8, h // 2),
                        cv2.FONT_HERSHEY_SIMPLEX, 0.7, (0, 0, 255), 2)
        if video_url:
            cv2.putText(canvas, f"demo: {video_url}", (8, h - 6),
                        cv2.FONT_HERSHEY_SIMPLEX, 0.45, (180, 180, 180), 1)
        cv2.imshow(self.window, canvas)
        if cv2.waitKey(1) & 0xFF == ord("q"):
            self.quit_requested = True

    def close(self):
        self.cv2.destroyWindow(self.window)


def make_speaker(enabled: bool):
    """Optional text-to-speech hook; silently absent when not installed."""
    if not enabled:
        return None
    try:
        import pyttsx3
    except ImportError:
        return None
    engine = pyttsx3.init()

    def speak(message: str):
        engine.say(message)
        engine.runAndWait()
    return speak
