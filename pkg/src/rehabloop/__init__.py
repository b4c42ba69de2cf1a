"""rehabloop: deterministic real-time rehabilitation feedback engine.

Turns clinical prescriptions into kinematic constraints, evaluates
streamed pose-landmark frames against them, and emits corrective
feedback with the justifying constraint attached to every event.
"""

__version__ = "0.1.0"

from .constraints import (
    ClinicalNote,
    ConflictingConstraints,
    Constraint,
    ConstraintSet,
    EmptyNote,
    GrammarExtraction,
    SchemaViolation,
    ValidationReport,
    from_schema,
    merge,
    parse_note,
    to_json,
    to_schema,
    validate,
)
from .feedback import (
    Debouncer,
    FeedbackConfig,
    FeedbackEvent,
    KinematicState,
    MessageTable,
    Severity,
    classify_angle,
    classify_velocity,
    render,
    resolve,
)
from .kinematics import (
    CANONICAL_LANDMARKS,
    JointAngleSample,
    JointDef,
    Landmark,
    MeasurementError,
    PoseFrame,
    SpatialRelation,
    VelocitySample,
    angle_between,
    angular_velocity,
    eval_spatial_relation,
    measure_joint,
)
from .providers import ExtractionProvider, ProviderUnavailable, SynthesisProvider
from .session import (
    EmptyLog,
    NoConstraintsExtracted,
    PatientState,
    Session,
    SessionLog,
    SessionSummary,
    phase1,
    summarize,
)
from .synthesis import (
    MockSynthesis,
    NoRenderableConstraint,
    SynthesisPrompt,
    build_prompt,
    synthesize,
)
