"""Pure geometry over pose landmark frames.

Joint angles, angular and spatial velocities, smoothing, and spatial
relations. Everything here is a pure function of its inputs; degenerate
inputs raise typed errors instead of producing NaN/inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

EPS_NORM = 1e-9
DEFAULT_VISIBILITY_FLOOR = 0.5

# Canonical 17-point anatomical enumeration. Clinical names used in
# prescriptions (acromion, lateral epicondyle, ulnar styloid) map onto
# shoulder / elbow / wrist respectively.
CANONICAL_LANDMARKS = (
    "nose",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
    "left_heel", "right_heel",
    "left_foot_index", "right_foot_index",
)
CANONICAL_LANDMARK_SET = frozenset(CANONICAL_LANDMARKS)

CLINICAL_ALIASES = {
    "acromion": "shoulder",
    "lateral_epicondyle": "elbow",
    "ulnar_styloid": "wrist",
}

SIDES = ("left", "right")


class MeasurementError(Exception):
    """Base class for failures while measuring a frame."""


class DegenerateVector(MeasurementError):
    """A ray used for an angle has (near-)zero length."""


class MissingLandmark(MeasurementError):
    """Required landmarks are absent from the frame."""

    def __init__(self, names: Sequence[str]):
        self.names = tuple(names)
        super().__init__(f"missing landmarks: {', '.join(self.names)}")


class LowConfidence(MeasurementError):
    """Measurement suppressed: a contributing landmark fell below the visibility floor."""

    def __init__(self, name: str, visibility: float, floor: float):
        self.name = name
        self.visibility = visibility
        self.floor = floor
        super().__init__(
            f"landmark {name} visibility {visibility:.3f} below floor {floor:.3f}"
        )


class UnknownRelation(MeasurementError):
    """Spatial relation name not recognized."""


class InsufficientHistory(MeasurementError):
    """Not enough samples in the window to estimate a velocity."""


class LandmarkError(ValueError):
    """Invalid landmark data (bad name, range, or non-finite value)."""


class UnknownLandmarkName(LandmarkError):
    pass


class CoordinateOutOfRange(LandmarkError):
    pass


@dataclass(frozen=True)
class Landmark:
    """One named anatomical point in normalized image space.

    x, y are in [0,1]; z is camera-relative depth in body-scale units;
    visibility is a confidence in [0,1].
    """

    name: str
    x: float
    y: float
    z: float = 0.0
    visibility: float = 1.0

    def __post_init__(self):
        if self.name not in CANONICAL_LANDMARK_SET:
            raise UnknownLandmarkName(f"unknown landmark name: {self.name!r}")
        for label, value in (("x", self.x), ("y", self.y), ("z", self.z),
                             ("visibility", self.visibility)):
            if not math.isfinite(value):
                raise CoordinateOutOfRange(f"{self.name}.{label} is not finite")
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise CoordinateOutOfRange(
                f"{self.name}: x,y must lie in [0,1], got ({self.x}, {self.y})"
            )
        if not (0.0 <= self.visibility <= 1.0):
            raise CoordinateOutOfRange(
                f"{self.name}: visibility must lie in [0,1], got {self.visibility}"
            )

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class PoseFrame:
    """One time-stamped set of named landmarks (at most one per canonical name)."""

    frame_id: int
    t_ms: float
    landmarks: dict = field(default_factory=dict)  # name -> Landmark

    def __post_init__(self):
        if not isinstance(self.landmarks, dict):
            lms = {}
            for lm in self.landmarks:
                if lm.name in lms:
                    raise LandmarkError(f"duplicate landmark: {lm.name}")
                lms[lm.name] = lm
            object.__setattr__(self, "landmarks", lms)

    @classmethod
    def from_landmarks(cls, frame_id: int, t_ms: float,
                       landmarks: Iterable[Landmark]) -> "PoseFrame":
        return cls(frame_id=frame_id, t_ms=t_ms, landmarks=list(landmarks))

    def get(self, name: str) -> Optional[Landmark]:
        return self.landmarks.get(name)


@dataclass(frozen=True)
class JointAngleSample:
    """A measured joint angle at an instant, in degrees within [0,180]."""

    joint: str
    axis: Optional[str]
    theta_deg: float
    t_ms: float
    confidence: float = 1.0


@dataclass(frozen=True)
class VelocitySample:
    """Angular (deg/s) and/or spatial (body-lengths/s) speed at an instant."""

    joint: str
    omega_deg_s: float
    v_norm: float
    t_ms: float


@dataclass(frozen=True)
class JointDef:
    """Maps a clinical joint/axis pair onto a measurable landmark angle.

    The angle is measured at `vertex` between vertex->ray_a and
    vertex->ray_b, optionally projected onto an anatomical plane.
    `supplement` reports 180 - included angle, for flexion-style axes
    where the neutral (straight) position should read 0.
    """

    vertex: str
    ray_a: str
    ray_b: str
    projection_plane: Optional[str] = None  # None | "frontal" | "sagittal"
    supplement: bool = False

    def __post_init__(self):
        if len({self.vertex, self.ray_a, self.ray_b}) != 3:
            raise ValueError("vertex, ray_a, ray_b must be distinct landmarks")


@dataclass(frozen=True)
class SpatialRelation:
    """A named positional rule, e.g. the knee staying behind the toes."""

    name: str
    joint: str = "knee"
    side: str = "left"


def angle_between(a, b) -> float:
    """Angle between two 3-vectors in degrees, in [0,180].

    Raises DegenerateVector if either vector has norm <= 1e-9.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= EPS_NORM or nb <= EPS_NORM:
        raise DegenerateVector(f"vector norm too small ({na:.3e}, {nb:.3e})")
    cos = float(np.dot(a, b) / (na * nb))
    cos = max(-1.0, min(1.0, cos))
    return math.degrees(math.acos(cos))


def _project(v: np.ndarray, plane: Optional[str]) -> np.ndarray:
    # frontal: the image plane (drop depth); sagittal: the side plane (drop x)
    if plane is None or plane == "none":
        return v
    if plane == "frontal":
        return np.array([v[0], v[1], 0.0])
    if plane == "sagittal":
        return np.array([0.0, v[1], v[2]])
    raise ValueError(f"unknown projection plane: {plane!r}")


def measure_joint(frame: PoseFrame, jdef: JointDef,
                  visibility_floor: float = DEFAULT_VISIBILITY_FLOOR) -> JointAngleSample:
    """Measure the joint angle a JointDef describes on one frame.

    Raises MissingLandmark / LowConfidence / DegenerateVector (all
    MeasurementError) rather than guessing from unreliable data.
    """
    needed = (jdef.vertex, jdef.ray_a, jdef.ray_b)
    missing = [n for n in needed if frame.get(n) is None]
    if missing:
        raise MissingLandmark(missing)
    points = [frame.get(n) for n in needed]
    for lm in points:
        if lm.visibility < visibility_floor:
            raise LowConfidence(lm.name, lm.visibility, visibility_floor)
    vertex, ra, rb = (p.position() for p in points)
    va = _project(ra - vertex, jdef.projection_plane)
    vb = _project(rb - vertex, jdef.projection_plane)
    theta = angle_between(va, vb)
    if jdef.supplement:
        theta = 180.0 - theta
    return JointAngleSample(
        joint=jdef.vertex,
        axis=None,
        theta_deg=theta,
        t_ms=frame.t_ms,
        confidence=min(p.visibility for p in points),
    )


def ema(values: Sequence[float], alpha: float) -> list:
    """Exponential moving average, seeded at the first value."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    out = []
    s = None
    for v in values:
        s = v if s is None else alpha * v + (1.0 - alpha) * s
        out.append(s)
    return out


def angular_velocity(history: Sequence[JointAngleSample], window_ms: float,
                     alpha: float = 0.5) -> VelocitySample:
    """Signed angular velocity (deg/s) from a joint-angle history.

    Uses the samples within window_ms of the newest timestamp, smooths
    them with an EMA, and takes the finite difference at the trailing
    edge (exact for linear series when alpha=1).
    """
    if len(history) < 2:
        raise InsufficientHistory("need at least 2 samples")
    t_last = history[-1].t_ms
    window = [s for s in history if s.t_ms >= t_last - window_ms]
    if len(window) < 2:
        raise InsufficientHistory(
            f"need at least 2 samples within {window_ms} ms, got {len(window)}"
        )
    for prev, cur in zip(window, window[1:]):
        if cur.t_ms <= prev.t_ms:
            raise ValueError("timestamps must strictly increase")
    smoothed = ema([s.theta_deg for s in window], alpha)
    dt_s = (window[-1].t_ms - window[-2].t_ms) / 1000.0
    omega = (smoothed[-1] - smoothed[-2]) / dt_s
    return VelocitySample(joint=window[-1].joint, omega_deg_s=omega,
                          v_norm=0.0, t_ms=t_last)


def body_length(frame: PoseFrame) -> float:
    """Mean hip-to-ankle distance, the frame's unit of body scale."""
    dists = []
    for side in SIDES:
        hip = frame.get(f"{side}_hip")
        ankle = frame.get(f"{side}_ankle")
        if hip is not None and ankle is not None:
            dists.append(float(np.linalg.norm(hip.position() - ankle.position())))
    if not dists:
        raise MissingLandmark(["left_hip", "left_ankle"])
    length = sum(dists) / len(dists)
    if length <= EPS_NORM:
        raise DegenerateVector("body length collapsed to zero")
    return length


def landmark_velocity(positions: Sequence[tuple], window_ms: float,
                      alpha: float = 0.5, joint: str = "") -> VelocitySample:
    """Spatial landmark speed in body-lengths/second.

    `positions` is a sequence of (t_ms, xyz ndarray, body_length) triplets
    ordered by time; smoothing and differencing mirror angular_velocity.
    """
    if len(positions) < 2:
        raise InsufficientHistory("need at least 2 positions")
    t_last = positions[-1][0]
    window = [p for p in positions if p[0] >= t_last - window_ms]
    if len(window) < 2:
        raise InsufficientHistory(
            f"need at least 2 positions within {window_ms} ms"
        )
    xs = ema([p[1][0] for p in window], alpha)
    ys = ema([p[1][1] for p in window], alpha)
    zs = ema([p[1][2] for p in window], alpha)
    dt_s = (window[-1][0] - window[-2][0]) / 1000.0
    if dt_s <= 0:
        raise ValueError("timestamps must strictly increase")
    step = np.array([xs[-1] - xs[-2], ys[-1] - ys[-2], zs[-1] - zs[-2]])
    scale = window[-1][2]
    v = float(np.linalg.norm(step)) / dt_s / scale
    return VelocitySample(joint=joint, omega_deg_s=0.0, v_norm=v, t_ms=t_last)


@dataclass(frozen=True)
class SpatialResult:
    satisfied: bool
    margin_norm: float


def eval_spatial_relation(frame: PoseFrame, relation: SpatialRelation) -> SpatialResult:
    """Evaluate a named spatial relation on one frame.

    behind_toe: satisfied iff the knee's horizontal displacement past the
    foot_index, measured along the ankle->foot_index facing direction, is
    <= 0. margin_norm is that signed displacement in body lengths.
    """
    if relation.name != "behind_toe":
        raise UnknownRelation(f"unknown spatial relation: {relation.name!r}")
    side = relation.side
    names = (f"{side}_knee", f"{side}_foot_index", f"{side}_ankle", f"{side}_hip")
    missing = [n for n in names if frame.get(n) is None]
    if missing:
        raise MissingLandmark(missing)
    knee, toe, ankle, _hip = (frame.get(n).position() for n in names)
    forward = toe - ankle
    forward[1] = 0.0  # facing direction is horizontal
    norm = np.linalg.norm(forward)
    if norm <= EPS_NORM:
        raise DegenerateVector("ankle and foot_index coincide horizontally")
    forward /= norm
    displacement = knee - toe
    displacement[1] = 0.0
    signed = float(np.dot(displacement, forward))
    margin = signed / body_length(frame)
    return SpatialResult(satisfied=signed <= 0.0, margin_norm=margin)


def _sided(side: str, base: str) -> str:
    return base if base.startswith(("left_", "right_")) else f"{side}_{base}"


def joint_def_for(joint: str, axis: str, side: str = "left") -> JointDef:
    """Resolve a clinical (joint, axis) pair to a measurable JointDef.

    Unsided joint names use the given default side; explicit
    "left_"/"right_" prefixes are honored.
    """
    base = joint
    for prefix in SIDES:
        if joint.startswith(prefix + "_"):
            side = prefix
            base = joint[len(prefix) + 1:]
            break
    base = CLINICAL_ALIASES.get(base, base)
    key = (base, axis)
    builders = {
        ("shoulder", "abduction"): lambda s: JointDef(
            vertex=f"{s}_shoulder", ray_a=f"{s}_elbow", ray_b=f"{s}_hip",
            projection_plane="frontal"),
        ("shoulder", "flexion"): lambda s: JointDef(
            vertex=f"{s}_shoulder", ray_a=f"{s}_elbow", ray_b=f"{s}_hip",
            projection_plane="sagittal"),
        ("elbow", "flexion"): lambda s: JointDef(
            vertex=f"{s}_elbow", ray_a=f"{s}_wrist", ray_b=f"{s}_shoulder",
            supplement=True),
        ("elbow", "extension"): lambda s: JointDef(
            vertex=f"{s}_elbow", ray_a=f"{s}_wrist", ray_b=f"{s}_shoulder"),
        ("knee", "flexion"): lambda s: JointDef(
            vertex=f"{s}_knee", ray_a=f"{s}_ankle", ray_b=f"{s}_hip",
            supplement=True),
        ("knee", "extension"): lambda s: JointDef(
            vertex=f"{s}_knee", ray_a=f"{s}_ankle", ray_b=f"{s}_hip"),
        ("hip", "flexion"): lambda s: JointDef(
            vertex=f"{s}_hip", ray_a=f"{s}_knee", ray_b=f"{s}_shoulder",
            supplement=True),
        ("hip", "abduction"): lambda s: JointDef(
            vertex=f"{s}_hip", ray_a=f"{s}_knee", ray_b=f"{s}_shoulder",
            projection_plane="frontal", supplement=True),
    }
    if key not in builders:
        raise KeyError(f"no joint definition for {base!r}/{axis!r}")
    return builders[key](side)
