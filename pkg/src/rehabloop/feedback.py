"""Diagnostic feedback: classify kinematic samples against constraints,
resolve priorities across constraints, debounce, and render messages.

Classification is pure and deterministic; generative providers may only
rephrase message text, never change a state or severity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Callable, Iterable, Optional

from .constraints import Constraint
from .kinematics import VelocitySample


class MissingLimit(ValueError):
    """Constraint lacks the limit field this classifier needs."""


class KinematicState(Enum):
    CRITICAL_VIOLATION = "CriticalViolation"
    SPATIAL_VIOLATION = "SpatialViolation"
    HIGH_VELOCITY = "HighVelocity"
    UNDER_EXTENSION = "UnderExtension"
    OPTIMAL = "Optimal"
    APPROACHING = "Approaching"
    NO_DATA = "NoData"


# Highest first. Safety dominates: a stop always outranks coaching.
PRIORITY = (
    KinematicState.CRITICAL_VIOLATION,
    KinematicState.SPATIAL_VIOLATION,
    KinematicState.HIGH_VELOCITY,
    KinematicState.UNDER_EXTENSION,
    KinematicState.OPTIMAL,
    KinematicState.APPROACHING,
    KinematicState.NO_DATA,
)
_RANK = {s: i for i, s in enumerate(PRIORITY)}

# Band order for monotonicity checks (worse form when over-extended).
ANGLE_BAND_ORDER = (
    KinematicState.UNDER_EXTENSION,
    KinematicState.APPROACHING,
    KinematicState.OPTIMAL,
    KinematicState.CRITICAL_VIOLATION,
)


class Severity(Enum):
    STOP = "stop"
    PACE = "pace"
    ENCOURAGE = "encourage"
    PRAISE = "praise"
    SILENT = "silent"


SEVERITY_FOR_STATE = {
    KinematicState.CRITICAL_VIOLATION: Severity.STOP,
    KinematicState.SPATIAL_VIOLATION: Severity.STOP,
    KinematicState.HIGH_VELOCITY: Severity.PACE,
    KinematicState.UNDER_EXTENSION: Severity.ENCOURAGE,
    KinematicState.OPTIMAL: Severity.PRAISE,
    KinematicState.APPROACHING: Severity.SILENT,
    KinematicState.NO_DATA: Severity.SILENT,
}

VIOLATION_STATES = frozenset({
    KinematicState.CRITICAL_VIOLATION,
    KinematicState.SPATIAL_VIOLATION,
    KinematicState.HIGH_VELOCITY,
})


@dataclass(frozen=True)
class FeedbackConfig:
    """Margins, bands, and debounce settings for the feedback loop."""

    delta_deg: float = 5.0
    optimal_band_deg: float = 10.0
    under_band_deg: float = 15.0
    stability_frames: int = 3
    min_message_interval_ms: float = 1000.0
    critical_bypasses_debounce: bool = True

    def __post_init__(self):
        if self.delta_deg <= 0:
            raise ValueError("delta_deg must be positive")
        if not 0 < self.optimal_band_deg <= self.under_band_deg:
            raise ValueError("need 0 < optimal_band_deg <= under_band_deg")
        if self.stability_frames < 1:
            raise ValueError("stability_frames must be >= 1")
        if self.min_message_interval_ms < 0:
            raise ValueError("min_message_interval_ms must be >= 0")


@dataclass(frozen=True)
class FeedbackEvent:
    """A corrective message plus the constraint that justifies it."""

    frame_id: int
    t_ms: float
    state: KinematicState
    message: Optional[str]
    severity: Severity
    theta_deg: Optional[float] = None
    violated_constraint_id: Optional[str] = None

    def __post_init__(self):
        if (self.state is KinematicState.CRITICAL_VIOLATION
                and (self.severity is not Severity.STOP
                     or self.violated_constraint_id is None)):
            raise ValueError("critical violations must be stop events with "
                             "a constraint id attached")


def classify_angle(theta_deg: float, constraint: Constraint,
                   cfg: FeedbackConfig = FeedbackConfig()) -> KinematicState:
    """Place an angle in its band relative to the constraint's max_angle.

    Bands (A = max_angle, d = delta_deg):
      theta >  A + d                   -> CriticalViolation
      A - optimal_band <= theta <= A+d -> Optimal
      A - under_band <= theta < A-opt  -> Approaching
      theta <  A - under_band          -> UnderExtension
    Exhaustive and mutually exclusive over [0, 180].
    """
    if constraint.max_angle is None:
        raise MissingLimit(f"{constraint.constraint_id}: no max_angle")
    a_max = constraint.max_angle
    if theta_deg > a_max + cfg.delta_deg:
        return KinematicState.CRITICAL_VIOLATION
    if theta_deg >= a_max - cfg.optimal_band_deg:
        return KinematicState.OPTIMAL
    if theta_deg >= a_max - cfg.under_band_deg:
        return KinematicState.APPROACHING
    return KinematicState.UNDER_EXTENSION


def classify_min_angle(theta_deg: float, constraint: Constraint) -> KinematicState:
    """Floor-only constraints: encourage below the floor, praise at/above."""
    if constraint.min_angle is None:
        raise MissingLimit(f"{constraint.constraint_id}: no min_angle")
    if theta_deg < constraint.min_angle:
        return KinematicState.UNDER_EXTENSION
    return KinematicState.OPTIMAL


def classify_velocity(v: VelocitySample,
                      constraint: Constraint) -> Optional[KinematicState]:
    """HighVelocity iff the relevant speed strictly exceeds max_velocity.

    Angular limits (constraint has an axis) read deg/s; spatial limits
    read body-lengths/s.
    """
    if constraint.max_velocity is None:
        raise MissingLimit(f"{constraint.constraint_id}: no max_velocity")
    magnitude = abs(v.omega_deg_s) if constraint.axis else v.v_norm
    if magnitude > constraint.max_velocity:
        return KinematicState.HIGH_VELOCITY
    return None


def resolve(states: Iterable[KinematicState]) -> KinematicState:
    """Highest-priority state present (CriticalViolation always wins)."""
    states = list(states)
    if not states:
        raise ValueError("resolve requires at least one state")
    return min(states, key=lambda s: _RANK[s])


# ---------------------------------------------------------------------------
# Messages


class MessageTable:
    """(state, joint) -> message template, loaded from a versioned data file.

    Templates may use {joint}, {theta} and {limit} placeholders. Defaults
    are the decision-matrix strings verbatim.
    """

    def __init__(self, doc: dict):
        if doc.get("version") != 1:
            raise ValueError(f"unsupported message table version: {doc.get('version')!r}")
        self.defaults = dict(doc["defaults"])
        self.overrides = dict(doc.get("overrides", {}))

    @classmethod
    def load(cls, path: Optional[str] = None) -> "MessageTable":
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                return cls(json.load(fh))
        return cls(json.loads(
            resources.files("rehabloop").joinpath("data/messages.json")
            .read_text(encoding="utf-8")))

    def render(self, state: KinematicState, joint: Optional[str] = None,
               theta: Optional[float] = None, limit: Optional[float] = None,
               phraser: Optional[Callable[[str], str]] = None) -> Optional[str]:
        """Message for a state, or None for the silent states.

        A phraser may rewrite wording; it cannot suppress a message
        (empty or failing phraser output falls back to the template).
        """
        template = self.overrides.get(f"{state.value}|{joint}") if joint else None
        if template is None:
            template = self.defaults.get(state.value)
        if template is None:
            return None
        message = template.format(joint=joint or "joint", theta=theta, limit=limit)
        if phraser is not None:
            try:
                rephrased = phraser(message)
            except Exception:
                rephrased = None
            if rephrased:
                message = rephrased
        return message


_DEFAULT_TABLE = None


def default_message_table() -> MessageTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = MessageTable.load()
    return _DEFAULT_TABLE


def render(state: KinematicState, joint: Optional[str] = None,
           theta: Optional[float] = None, limit: Optional[float] = None) -> Optional[str]:
    """Render with the bundled default message table."""
    return default_message_table().render(state, joint=joint, theta=theta,
                                          limit=limit)


# ---------------------------------------------------------------------------
# Debounce


class Debouncer:
    """Suppress feedback flicker at band boundaries.

    An event goes out only once its state has held for stability_frames
    consecutive frames and min_message_interval_ms has passed since the
    last emission of that same state. Critical violations bypass both
    gates (configurable) so stops are never delayed.
    """

    def __init__(self, cfg: FeedbackConfig):
        self.cfg = cfg
        self._current_state: Optional[KinematicState] = None
        self._run_length = 0
        self._last_emit_ms: dict = {}

    def reset(self):
        self._current_state = None
        self._run_length = 0
        self._last_emit_ms.clear()

    def push(self, candidate: FeedbackEvent) -> Optional[FeedbackEvent]:
        state = candidate.state
        if state == self._current_state:
            self._run_length += 1
        else:
            self._current_state = state
            self._run_length = 1

        if candidate.severity is Severity.SILENT:
            return None
        if (state is KinematicState.CRITICAL_VIOLATION
                and self.cfg.critical_bypasses_debounce):
            self._last_emit_ms[state] = candidate.t_ms
            return candidate
        if self._run_length < self.cfg.stability_frames:
            return None
        last = self._last_emit_ms.get(state)
        if last is not None and candidate.t_ms - last < self.cfg.min_message_interval_ms:
            return None
        self._last_emit_ms[state] = candidate.t_ms
        return candidate


def debounce(candidate: FeedbackEvent, history: list,
             cfg: FeedbackConfig) -> Optional[FeedbackEvent]:
    """Stateless single-shot form of the debounce rule.

    `history` is the ordered list of prior candidate events (emitted or
    not); returns the event to emit, if any. Sessions keep a Debouncer
    instead of replaying history each frame.
    """
    d = Debouncer(cfg)
    out = None
    for event in list(history) + [candidate]:
        out = d.push(event)
    return out
