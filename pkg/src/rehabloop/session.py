"""Session orchestration: the prescription-to-feedback loop end to end.

Phase 1 extracts and validates constraints and requests a demonstration
video; phase 2 evaluates every constraint on every incoming frame,
resolves one state, debounces, and logs. Anomalous frames become typed
log records, never crashes.
"""

from __future__ import annotations

import logging
import math
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import synthesis as synthesis_mod
from .constraints import (
    ClinicalNote,
    Constraint,
    ConstraintSet,
    EmptyNote,
    GrammarExtraction,
    ValidationReport,
    validate,
)
from .feedback import (
    Debouncer,
    FeedbackConfig,
    FeedbackEvent,
    KinematicState,
    MessageTable,
    SEVERITY_FOR_STATE,
    classify_angle,
    classify_min_angle,
    classify_velocity,
    default_message_table,
    resolve,
)
from .kinematics import (
    MeasurementError,
    PoseFrame,
    SpatialRelation,
    angular_velocity,
    body_length,
    eval_spatial_relation,
    joint_def_for,
    landmark_velocity,
    measure_joint,
)
from .providers import ProviderUnavailable

logger = logging.getLogger(__name__)


class SessionError(Exception):
    pass


class NoConstraintsExtracted(SessionError):
    """The note yielded no constraints; the session refuses to start."""


class ConstraintsRejected(SessionError):
    """Extraction output failed validation; hard limits stay authoritative."""

    def __init__(self, report: ValidationReport):
        self.report = report
        details = "; ".join(f.detail for f in report.findings)
        super().__init__(f"constraints rejected: {details}")


class StaleFrame(SessionError):
    """Frame timestamp did not advance; the frame is dropped and logged."""


class EmptyLog(SessionError):
    pass


@dataclass
class PatientState:
    """The shared state object threading notes -> constraints -> pose -> feedback."""

    session_id: str
    started_at: float
    notes: ClinicalNote
    constraints: ConstraintSet
    video_url: Optional[str] = None
    pose: dict = field(default_factory=dict)
    feedback: Optional[FeedbackEvent] = None


class SessionLog:
    """Append-only evaluation journal (step and drop records)."""

    def __init__(self):
        self._records = []
        self._lock = threading.Lock()

    def append(self, record: dict):
        with self._lock:
            self._records.append(record)

    def records(self) -> list:
        with self._lock:
            return list(self._records)

    def __len__(self):
        with self._lock:
            return len(self._records)

    def save(self, path: str):
        from .ingest.protocol import dumps
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records():
                fh.write(dumps(record))


@dataclass(frozen=True)
class SessionSummary:
    """Aggregates of one finished session."""

    duration_ms: float
    frames: int
    dwell: dict  # state value -> fraction of processed frames
    critical_violations: int
    events: int
    dropped: int
    latency_mean_us: float
    latency_p95_us: float
    latency_max_us: float

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "duration_ms": self.duration_ms,
            "frames": self.frames,
            "dwell": dict(sorted(self.dwell.items())),
            "critical_violations": self.critical_violations,
            "events": self.events,
            "dropped": self.dropped,
        }
        if include_timing:
            out["latency_us"] = {
                "mean": self.latency_mean_us,
                "p95": self.latency_p95_us,
                "max": self.latency_max_us,
            }
        return out

    def to_json(self, include_timing: bool = True) -> str:
        import json
        return json.dumps(self.to_dict(include_timing=include_timing),
                          sort_keys=True, ensure_ascii=False,
                          separators=(",", ":"))


def phase1(note: ClinicalNote, extraction=None, synthesis=None,
           session_id: Optional[str] = None,
           prompt_template: Optional[str] = None) -> PatientState:
    """Pre-session extraction and synthesis.

    Extraction output always passes through validate; findings are fatal
    so no provider can smuggle an unsafe limit in. Synthesis failure is
    non-fatal: the session proceeds without a demonstration video.
    """
    extraction = extraction if extraction is not None else GrammarExtraction()
    if synthesis is None:
        synthesis = synthesis_mod.MockSynthesis()
    try:
        cset = extraction.extract(note)
    except EmptyNote as exc:
        raise NoConstraintsExtracted(str(exc)) from exc
    if not cset.constraints:
        raise NoConstraintsExtracted(
            f"note {note.note_id!r} yielded no constraints")
    report = validate(cset)
    if not report.ok:
        raise ConstraintsRejected(report)
    video_url = None
    try:
        prompt = synthesis_mod.build_prompt(cset, template=prompt_template)
        video_url = synthesis_mod.synthesize(prompt, synthesis)
    except (ProviderUnavailable, synthesis_mod.NoRenderableConstraint) as exc:
        logger.warning("video synthesis unavailable, continuing without: %s", exc)
    return PatientState(
        session_id=session_id or f"s-{uuid.uuid4().hex[:12]}",
        started_at=time.time(),
        notes=note,
        constraints=cset,
        video_url=video_url,
    )


class _Evaluator:
    """Per-constraint measurement state (joint def or relation + histories)."""

    def __init__(self, constraint: Constraint, default_side: str):
        self.constraint = constraint
        self.jdef = None
        self.relation = None
        self.unmeasurable_reason = None
        self.angle_history = deque(maxlen=64)
        self.position_history = deque(maxlen=64)
        if constraint.spatial_rel is not None:
            side = default_side
            joint = constraint.joint
            for prefix in ("left", "right"):
                if joint.startswith(prefix + "_"):
                    side, joint = prefix, joint[len(prefix) + 1:]
            try:
                self.relation = SpatialRelation(name=constraint.spatial_rel,
                                                joint=joint, side=side)
            except Exception as exc:  # pragma: no cover - relation is a dataclass
                self.unmeasurable_reason = str(exc)
        elif constraint.axis is not None:
            try:
                self.jdef = joint_def_for(constraint.joint, constraint.axis,
                                          side=default_side)
            except KeyError as exc:
                self.unmeasurable_reason = str(exc)
        else:
            self.unmeasurable_reason = (
                f"{constraint.constraint_id}: no measurable axis or relation")


class Session:
    """One patient session: evaluates frames in timestamp order.

    Not re-entrant; frames may be handed over from another thread but
    must be stepped from a single evaluation context.
    """

    def __init__(self, state: PatientState, cfg: FeedbackConfig = FeedbackConfig(),
                 *, message_table: Optional[MessageTable] = None,
                 default_side: str = "left", visibility_floor: float = 0.5,
                 velocity_window_ms: float = 500.0, smoothing_alpha: float = 0.5,
                 phraser: Optional[Callable[[str], str]] = None):
        if not state.constraints.constraints:
            raise NoConstraintsExtracted("session requires at least one constraint")
        self.state = state
        self.cfg = cfg
        self.table = message_table or default_message_table()
        self.visibility_floor = visibility_floor
        self.velocity_window_ms = velocity_window_ms
        self.smoothing_alpha = smoothing_alpha
        self.phraser = phraser
        self.log = SessionLog()
        self.events = []
        self._debouncer = Debouncer(cfg)
        self._last_t_ms: Optional[float] = None
        self._evaluators = [
            _Evaluator(c, default_side) for c in state.constraints.constraints
        ]
        for ev in self._evaluators:
            if ev.unmeasurable_reason:
                logger.warning("constraint %s cannot be measured: %s",
                               ev.constraint.constraint_id, ev.unmeasurable_reason)

    # -- frame loop --------------------------------------------------------

    def step(self, frame: PoseFrame) -> Optional[FeedbackEvent]:
        """Evaluate one frame; returns the emitted event, if any.

        Out-of-order frames are dropped and logged; measurement failures
        become NoData, never exceptions.
        """
        t0 = time.perf_counter_ns()
        if self._last_t_ms is not None and frame.t_ms <= self._last_t_ms:
            self.log_drop(frame.frame_id, frame.t_ms, "stale_frame",
                          f"t_ms {frame.t_ms} <= last {self._last_t_ms}")
            return None
        self._last_t_ms = frame.t_ms

        states_by_constraint = {}
        contributions = []  # (state, constraint, theta)
        angles = {}
        velocities = {}
        for ev in self._evaluators:
            c = ev.constraint
            per_constraint = []
            theta = None
            if ev.unmeasurable_reason is not None:
                per_constraint.append(KinematicState.NO_DATA)
            elif ev.relation is not None:
                per_constraint.extend(
                    self._eval_spatial(ev, frame, velocities))
            else:
                theta, measured = self._eval_angle(ev, frame, angles, velocities)
                per_constraint.extend(measured)
            for st in per_constraint:
                contributions.append((st, c, theta))
            if per_constraint:
                states_by_constraint[c.constraint_id] = resolve(per_constraint).value

        if contributions:
            resolved = resolve(st for st, _, _ in contributions)
        else:
            resolved = KinematicState.NO_DATA
        attr_constraint = None
        attr_theta = None
        for st, c, theta in contributions:
            if st is resolved:
                attr_constraint, attr_theta = c, theta
                break

        message = None
        attr_id = None
        if resolved is not KinematicState.NO_DATA and attr_constraint is not None:
            attr_id = attr_constraint.constraint_id
            message = self.table.render(
                resolved, joint=attr_constraint.joint, theta=attr_theta,
                limit=attr_constraint.max_angle, phraser=self.phraser)
        candidate = FeedbackEvent(
            frame_id=frame.frame_id,
            t_ms=frame.t_ms,
            state=resolved,
            message=message,
            severity=SEVERITY_FOR_STATE[resolved],
            theta_deg=attr_theta,
            violated_constraint_id=attr_id,
        )
        emitted = self._debouncer.push(candidate)

        self.state.pose = {"angles": angles, "velocities": velocities,
                           "frame_id": frame.frame_id, "t_ms": frame.t_ms}
        if emitted is not None:
            self.state.feedback = emitted
            self.events.append(emitted)

        latency_us = (time.perf_counter_ns() - t0) // 1000
        self.log.append({
            "type": "step",
            "frame_id": frame.frame_id,
            "t_ms": frame.t_ms,
            "angles": angles,
            "states": states_by_constraint,
            "resolved": resolved.value,
            "event": _event_dict(emitted),
            "latency_us": int(latency_us),
        })
        return emitted

    def _eval_angle(self, ev, frame, angles, velocities):
        c = ev.constraint
        states = []
        theta = None
        try:
            sample = measure_joint(frame, ev.jdef,
                                   visibility_floor=self.visibility_floor)
        except MeasurementError:
            states.append(KinematicState.NO_DATA)
            return theta, states
        theta = sample.theta_deg
        angles[f"{ev.jdef.vertex}"] = theta
        ev.angle_history.append(sample)
        if c.max_angle is not None:
            states.append(classify_angle(theta, c, self.cfg))
        elif c.min_angle is not None:
            states.append(classify_min_angle(theta, c))
        if c.max_velocity is not None and len(ev.angle_history) >= 2:
            try:
                vs = angular_velocity(list(ev.angle_history),
                                      self.velocity_window_ms,
                                      alpha=self.smoothing_alpha)
            except MeasurementError:
                pass
            else:
                velocities[ev.jdef.vertex] = vs.omega_deg_s
                vstate = classify_velocity(vs, c)
                if vstate is not None:
                    states.append(vstate)
        return theta, states

    def _eval_spatial(self, ev, frame, velocities):
        c = ev.constraint
        states = []
        try:
            result = eval_spatial_relation(frame, ev.relation)
        except MeasurementError:
            states.append(KinematicState.NO_DATA)
            return states
        states.append(KinematicState.SPATIAL_VIOLATION if not result.satisfied
                      else KinematicState.OPTIMAL)
        if c.max_velocity is not None:
            name = f"{ev.relation.side}_{ev.relation.joint}"
            lm = frame.get(name)
            if lm is not None:
                try:
                    scale = body_length(frame)
                except MeasurementError:
                    scale = None
                if scale is not None:
                    ev.position_history.append((frame.t_ms, lm.position(), scale))
                    if len(ev.position_history) >= 2:
                        try:
                            vs = landmark_velocity(list(ev.position_history),
                                                   self.velocity_window_ms,
                                                   alpha=self.smoothing_alpha,
                                                   joint=name)
                        except MeasurementError:
                            pass
                        else:
                            velocities[name] = vs.v_norm
                            vstate = classify_velocity(vs, c)
                            if vstate is not None:
                                states.append(vstate)
        return states

    # -- bookkeeping --------------------------------------------------------

    def log_drop(self, frame_id, t_ms, reason: str, detail: str = ""):
        self.log.append({"type": "drop", "frame_id": frame_id, "t_ms": t_ms,
                         "reason": reason, "detail": detail})

    def summary(self) -> SessionSummary:
        return summarize(self.log)


def _event_dict(event: Optional[FeedbackEvent]) -> Optional[dict]:
    if event is None:
        return None
    return {
        "frame_id": event.frame_id,
        "t_ms": event.t_ms,
        "state": event.state.value,
        "message": event.message,
        "severity": event.severity.value,
        "theta_deg": event.theta_deg,
        "violated_constraint_id": event.violated_constraint_id,
    }


def summarize(log: SessionLog) -> SessionSummary:
    """Aggregate a finalized log into a SessionSummary."""
    records = log.records() if isinstance(log, SessionLog) else list(log)
    steps = [r for r in records if r.get("type") == "step"]
    drops = [r for r in records if r.get("type") == "drop"]
    if not steps:
        raise EmptyLog("no processed frames in log")
    dwell_counts = {}
    events = 0
    criticals = 0
    latencies = []
    for r in steps:
        dwell_counts[r["resolved"]] = dwell_counts.get(r["resolved"], 0) + 1
        latencies.append(r["latency_us"])
        if r["event"] is not None:
            events += 1
            if r["event"]["state"] == KinematicState.CRITICAL_VIOLATION.value:
                criticals += 1
    n = len(steps)
    dwell = {state: count / n for state, count in dwell_counts.items()}
    latencies.sort()
    p95 = latencies[max(0, math.ceil(0.95 * len(latencies)) - 1)]
    return SessionSummary(
        duration_ms=steps[-1]["t_ms"] - steps[0]["t_ms"],
        frames=n,
        dwell=dwell,
        critical_violations=criticals,
        events=events,
        dropped=len(drops),
        latency_mean_us=sum(latencies) / len(latencies),
        latency_p95_us=float(p95),
        latency_max_us=float(latencies[-1]),
    )


class FrameQueue:
    """Bounded hand-off queue: when full, the oldest frame is dropped
    (freshness beats completeness for live feedback) and reported."""

    def __init__(self, maxsize: int, on_drop: Optional[Callable] = None):
        self.maxsize = maxsize
        self.on_drop = on_drop
        self._items = deque()
        self._cond = threading.Condition()
        self._closed = False

    def put(self, item):
        with self._cond:
            if self._closed:
                return
            if len(self._items) >= self.maxsize:
                dropped = self._items.popleft()
                if self.on_drop is not None:
                    self.on_drop(dropped)
            self._items.append(item)
            self._cond.notify()

    def get(self, timeout: Optional[float] = None):
        """Next item, or None on timeout / after close with empty queue."""
        with self._cond:
            if not self._items:
                self._cond.wait(timeout=timeout)
            if self._items:
                return self._items.popleft()
            return None

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed and not self._items
