"""Landmark frame sources: webcam + pose model, replay files, synthetic.

Every source yields LandmarkFrame objects already in canonical names and
normalized coordinates, so the rest of the client never sees pixels or
model-specific indices.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from typing import Iterator, Optional

from .config import CANONICAL_LANDMARKS


class CameraUnavailable(RuntimeError):
    pass


class BackendUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class LandmarkFrame:
    frame_id: int
    t_ms: float
    landmarks: tuple  # of dicts {name, x, y, z, visibility}


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else v


def make_landmark(name: str, x: float, y: float, z: float = 0.0,
                  visibility: float = 1.0) -> dict:
    """Build one wire-ready landmark entry; pose models can emit slightly
    out-of-range normalized coords, so x/y/visibility are clamped."""
    return {"name": name, "x": _clamp01(float(x)), "y": _clamp01(float(y)),
            "z": float(z), "visibility": _clamp01(float(visibility))}


class SyntheticSource:
    """Camera-free demo source: a neutral pose with a slow left-arm sweep."""

    BASE = {
        "nose": (0.44, 0.15), "left_shoulder": (0.5, 0.4),
        "right_shoulder": (0.36, 0.4), "right_elbow": (0.34, 0.55),
        "right_wrist": (0.33, 0.68), "left_hip": (0.5, 0.7),
        "right_hip": (0.38, 0.7), "left_knee": (0.5, 0.84),
        "right_knee": (0.38, 0.84), "left_ankle": (0.5, 0.96),
        "right_ankle": (0.38, 0.96), "left_heel": (0.49, 0.975),
        "right_heel": (0.37, 0.975), "left_foot_index": (0.53, 0.975),
        "right_foot_index": (0.41, 0.975),
    }

    def __init__(self, fps: float = 15.0, count: int = 150,
                 peak_angle_deg: float = 80.0, period_ms: float = 4000.0):
        self.fps = fps
        self.count = count
        self.peak = peak_angle_deg
        self.period_ms = period_ms

    def frames(self) -> Iterator[LandmarkFrame]:
        for k in range(self.count):
            t_ms = k * 1000.0 / self.fps
            theta = math.radians(
                self.peak * (1 - math.cos(2 * math.pi * t_ms / self.period_ms)) / 2)
            sx, sy = self.BASE["left_shoulder"]
            direction = (math.sin(theta), math.cos(theta))
            elbow = (sx + 0.25 * direction[0], sy + 0.25 * direction[1])
            wrist = (elbow[0] + 0.22 * direction[0], elbow[1] + 0.22 * direction[1])
            landmarks = [make_landmark(n, *xy) for n, xy in self.BASE.items()]
            landmarks.append(make_landmark("left_elbow", *elbow))
            landmarks.append(make_landmark("left_wrist", *wrist))
            yield LandmarkFrame(frame_id=k, t_ms=t_ms, landmarks=tuple(landmarks))


class ReplaySource:
    """Streams a recorded landmark file (wire frame records) as the input."""

    def __init__(self, path: str):
        self.path = path

    def frames(self) -> Iterator[LandmarkFrame]:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                if record.get("type") != "frame":
                    continue
                landmarks = tuple(
                    make_landmark(lm["name"], lm["x"], lm["y"],
                                  lm.get("z", 0.0), lm.get("visibility", 1.0))
                    for lm in record["landmarks"])
                yield LandmarkFrame(frame_id=int(record["frame_id"]),
                                    t_ms=float(record["t_ms"]),
                                    landmarks=landmarks)


class MediapipeBackend:
    """Pose landmarks from MediaPipe, when the extra is installed."""

    def __init__(self):
        try:
            import mediapipe as mp
        except ImportError as exc:
            raise BackendUnavailable(
                "mediapipe is not installed; install rehabloop-client[camera] "
                "or use --synthetic / --replay") from exc
        self._pose = mp.solutions.pose.Pose(min_detection_confidence=0.5,
                                            min_tracking_confidence=0.5)

    def infer(self, bgr_image) -> Optional[list]:
        """Returns [(index, x, y, z, visibility)] or None when no person."""
        import cv2
        rgb = cv2.cvtColor(bgr_image, cv2.COLOR_BGR2RGB)
        result = self._pose.process(rgb)
        if not result.pose_landmarks:
            return None
        return [(i, lm.x, lm.y, lm.z, lm.visibility)
                for i, lm in enumerate(result.pose_landmarks.landmark)]


class CameraSource:
    """Webcam capture -> pose backend -> canonical landmark frames.

    Inference runs locally; only landmarks ever leave this object.
    """

    def __init__(self, camera_index: int, mapping: dict, backend=None,
                 target_fps: float = 15.0):
        try:
            import cv2
        except ImportError as exc:
            raise BackendUnavailable("opencv is not installed; install "
                                     "rehabloop-client[camera]") from exc
        self._cv2 = cv2
        self.capture = cv2.VideoCapture(camera_index)
        if not self.capture.isOpened():
            raise CameraUnavailable(f"cannot open camera {camera_index}")
        self.mapping = mapping
        self.backend = backend or MediapipeBackend()
        self.target_fps = target_fps
        self.last_image = None

    def frames(self) -> Iterator[LandmarkFrame]:
        frame_id = 0
        start = time.monotonic()
        while True:
            ok, image = self.capture.read()
            if not ok:
                return
            self.last_image = image
            detections = self.backend.infer(image)
            t_ms = (time.monotonic() - start) * 1000.0
            if detections is not None:
                landmarks = []
                seen = set()
                for index, x, y, z, visibility in detections:
                    name = self.mapping.get(index)
                    if name is None or name in seen:
                        continue
                    seen.add(name)
                    landmarks.append(make_landmark(name, x, y, z, visibility))
                yield LandmarkFrame(frame_id=frame_id, t_ms=t_ms,
                                    landmarks=tuple(landmarks))
                frame_id += 1

    def close(self):
        self.capture.release()


def frame_record(frame: LandmarkFrame) -> str:
    """Serialize one frame as a wire line (canonical key order)."""
    record = {"type": "frame", "frame_id": frame.frame_id, "t_ms": frame.t_ms,
              "landmarks": sorted(frame.landmarks, key=lambda lm: lm["name"])}
    return json.dumps(record, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":")) + "\n"


def open_record(note: str) -> str:
    return json.dumps({"type": "open", "note": note}, sort_keys=True,
                      ensure_ascii=False, separators=(",", ":")) + "\n"
