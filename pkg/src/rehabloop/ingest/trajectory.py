"""Synthetic pose trajectory generator.

Produces landmark frames with a commanded left-shoulder abduction angle,
so angle measurement can be checked against ground truth and sessions can
be driven without a camera. Identical seeds yield byte-identical streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..kinematics import CANONICAL_LANDMARKS, Landmark, PoseFrame

SHOULDER = np.array([0.5, 0.4, 0.0])
HIP = np.array([0.5, 0.7, 0.0])
ARM_RADIUS = 0.25
FOREARM_RADIUS = 0.22

# Neutral placements for everything the arm sweep does not move.
_NEUTRAL = {
    "nose": (0.44, 0.15, 0.0),
    "right_shoulder": (0.36, 0.4, 0.0),
    "right_elbow": (0.34, 0.55, 0.0),
    "right_wrist": (0.33, 0.68, 0.0),
    "right_hip": (0.38, 0.7, 0.0),
    "left_knee": (0.5, 0.84, 0.0),
    "right_knee": (0.38, 0.84, 0.0),
    "left_ankle": (0.5, 0.96, 0.0),
    "right_ankle": (0.38, 0.96, 0.0),
    "left_heel": (0.49, 0.975, 0.0),
    "right_heel": (0.37, 0.975, 0.0),
    "left_foot_index": (0.53, 0.975, 0.05),
    "right_foot_index": (0.41, 0.975, 0.05),
}


@dataclass(frozen=True)
class TrajectorySpec:
    """One sinusoidal repetition pattern: theta(t) = peak*(1-cos(2*pi*t/period))/2."""

    peak_angle_deg: float = 90.0
    period_ms: float = 4000.0
    repetitions: int = 1
    fps: float = 30.0
    noise_sigma: float = 0.0
    seed: int = 0
    joint: str = "shoulder"
    axis: str = "abduction"

    def __post_init__(self):
        if not 0.0 < self.peak_angle_deg <= 180.0:
            raise ValueError("peak_angle_deg must be in (0, 180]")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.period_ms <= 0:
            raise ValueError("period_ms must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def angle_at(self, t_ms: float) -> float:
        """Commanded angle at time t (the analytic ground truth)."""
        return self.peak_angle_deg * (1.0 - math.cos(2.0 * math.pi * t_ms / self.period_ms)) / 2.0

    def omega_at(self, t_ms: float) -> float:
        """Analytic angular velocity at time t, deg/s."""
        return (self.peak_angle_deg * math.pi / self.period_ms
                * math.sin(2.0 * math.pi * t_ms / self.period_ms) * 1000.0)

    @property
    def frame_count(self) -> int:
        duration_ms = self.period_ms * self.repetitions
        return int(round(duration_ms * self.fps / 1000.0))


def frame_at_angle(theta_deg: float, frame_id: int, t_ms: float,
                   rng: Optional[np.random.Generator] = None,
                   noise_sigma: float = 0.0) -> PoseFrame:
    """Place all 17 landmarks with the left arm at the given abduction angle.

    The elbow sits on a 0.25-radius arc measured from the trunk line
    (shoulder->hip); the wrist continues the straight arm. Noise, when
    requested, perturbs every coordinate of every landmark and x/y are
    clamped back into [0,1].
    """
    theta = math.radians(theta_deg)
    arm_dir = np.array([math.sin(theta), math.cos(theta), 0.0])
    elbow = SHOULDER + ARM_RADIUS * arm_dir
    wrist = elbow + FOREARM_RADIUS * arm_dir

    coords = {"left_shoulder": SHOULDER, "left_hip": HIP,
              "left_elbow": elbow, "left_wrist": wrist}
    for name, xyz in _NEUTRAL.items():
        coords[name] = np.array(xyz)

    landmarks = []
    for name in CANONICAL_LANDMARKS:
        p = coords[name]
        if rng is not None and noise_sigma > 0.0:
            p = p + rng.normal(0.0, noise_sigma, size=3)
        x = min(1.0, max(0.0, float(p[0])))
        y = min(1.0, max(0.0, float(p[1])))
        landmarks.append(Landmark(name=name, x=x, y=y, z=float(p[2]), visibility=1.0))
    return PoseFrame.from_landmarks(frame_id=frame_id, t_ms=t_ms, landmarks=landmarks)


def generate(spec: TrajectorySpec) -> Iterator[PoseFrame]:
    """Stream frames for the spec's sinusoidal repetitions."""
    rng = np.random.default_rng(spec.seed) if spec.noise_sigma > 0 else None
    for k in range(spec.frame_count):
        t_ms = k * 1000.0 / spec.fps
        yield frame_at_angle(spec.angle_at(t_ms), frame_id=k, t_ms=t_ms,
                             rng=rng, noise_sigma=spec.noise_sigma)


def generate_hold(theta_deg: float, count: int, fps: float = 30.0,
                  noise_sigma: float = 0.0, seed: int = 0) -> Iterator[PoseFrame]:
    """Stream frames holding one fixed commanded angle (Monte Carlo fixture)."""
    rng = np.random.default_rng(seed) if noise_sigma > 0 else None
    for k in range(count):
        yield frame_at_angle(theta_deg, frame_id=k, t_ms=k * 1000.0 / fps,
                             rng=rng, noise_sigma=noise_sigma)
