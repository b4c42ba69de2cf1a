"""Clinical prescription text -> structured kinematic constraints.

A deterministic pattern grammar stands in for the extraction LLM: every
sentence either contributes to a constraint or lands in residual_text,
never silently dropped. The pattern table ships as a versioned data file
so coverage can grow without code changes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

URGENCY_LEVELS = ("normal", "high")
DEFAULT_PACING_VELOCITY = 0.5


class ConstraintError(Exception):
    pass


class EmptyNote(ConstraintError):
    """Note text is empty after trimming whitespace."""


class ConflictingConstraints(ConstraintError):
    """One note prescribes contradictory limits for the same joint/axis."""


class SchemaViolation(ConstraintError):
    """Schema document is structurally invalid; carries the field path."""

    def __init__(self, path: str, detail: str):
        self.path = path
        super().__init__(f"{path}: {detail}")


@dataclass(frozen=True)
class ClinicalNote:
    text: str
    note_id: str = "note"


@dataclass(frozen=True)
class Constraint:
    """One kinematic limit extracted from a prescription.

    At least one of max_angle, min_angle, spatial_rel, max_velocity must
    be present for the constraint to be valid (checked by validate, not
    at construction, so reports can describe broken inputs).
    """

    constraint_id: str
    joint: str
    axis: Optional[str] = None
    max_angle: Optional[float] = None
    min_angle: Optional[float] = None
    spatial_rel: Optional[str] = None
    max_velocity: Optional[float] = None
    urgency: str = "normal"
    extensions: dict = field(default_factory=dict)

    def has_limit(self) -> bool:
        return any(v is not None for v in
                   (self.max_angle, self.min_angle, self.spatial_rel,
                    self.max_velocity))

    def key(self) -> tuple:
        return (self.joint, self.axis, self.spatial_rel)


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple = ()
    residual_text: tuple = ()
    source_note_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        # residual sentences are a set in spirit; keep first occurrence only
        seen = set()
        residual = []
        for s in self.residual_text:
            if s not in seen:
                seen.add(s)
                residual.append(s)
        object.__setattr__(self, "residual_text", tuple(residual))

    def same_content(self, other: "ConstraintSet") -> bool:
        """Order-insensitive equality (merge output order is by appearance)."""
        return (sorted(self.constraints, key=lambda c: c.constraint_id)
                == sorted(other.constraints, key=lambda c: c.constraint_id)
                and sorted(self.residual_text) == sorted(other.residual_text)
                and self.source_note_id == other.source_note_id)


@dataclass(frozen=True)
class Finding:
    code: str
    detail: str
    constraint_ids: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.findings


# ---------------------------------------------------------------------------
# Grammar


class Grammar:
    """Compiled pattern table for prescription sentences."""

    def __init__(self, doc: dict):
        if doc.get("version") != 1:
            raise ConstraintError(f"unsupported grammar version: {doc.get('version')!r}")
        self.version = doc["version"]
        subs = {
            "{J}": "|".join(doc["joints"]),
            "{A}": "|".join(doc["axes"]),
            "{SIDE}": r"(?:(?P<side>left|right)[\s-]+)?",
            "{DEG}": r"(?P<deg>\d+(?:\.\d+)?)",
            "{UNIT}": r"\s*(?:°|deg(?:ree)?s?\.?)",
        }

        def compile_pattern(raw: str) -> re.Pattern:
            for token, expansion in subs.items():
                raw = raw.replace(token, expansion)
            return re.compile(raw, re.IGNORECASE)

        self.angle_patterns = []  # (kind, pattern)
        self.spatial_patterns = []
        self.pacing_patterns = []  # (kind, pattern)
        for entry in doc["patterns"]:
            kind = entry["kind"]
            pattern = compile_pattern(entry["regex"])
            if kind in ("max_angle", "min_angle"):
                self.angle_patterns.append((kind, pattern))
            elif kind == "spatial":
                self.spatial_patterns.append((entry["relation"], pattern))
            elif kind in ("pacing", "pacing_value"):
                self.pacing_patterns.append((kind, pattern))
            else:
                raise ConstraintError(f"unknown pattern kind: {kind!r}")
        self.urgency_patterns = [compile_pattern(r) for r in doc["urgency_keywords"]]
        self.default_velocity = doc.get("default_velocity", DEFAULT_PACING_VELOCITY)

    def pacing_velocity(self, sentence: str) -> Optional[float]:
        for kind, pattern in self.pacing_patterns:
            m = pattern.search(sentence)
            if m:
                if kind == "pacing_value":
                    return _number(m.group("v"))
                return self.default_velocity
        return None

    def is_urgent(self, sentence: str) -> bool:
        return any(p.search(sentence) for p in self.urgency_patterns)


_DEFAULT_GRAMMAR = None


def load_grammar(path: Optional[str] = None) -> Grammar:
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            return Grammar(json.load(fh))
    doc = json.loads(
        resources.files("rehabloop").joinpath("data/grammar_patterns.json")
        .read_text(encoding="utf-8"))
    return Grammar(doc)


def default_grammar() -> Grammar:
    global _DEFAULT_GRAMMAR
    if _DEFAULT_GRAMMAR is None:
        _DEFAULT_GRAMMAR = load_grammar()
    return _DEFAULT_GRAMMAR


def split_sentences(text: str) -> list:
    parts = re.split(r"(?<=[.!?;])\s+|\n+", text)
    return [p.strip() for p in parts if p.strip()]


def _number(s: str):
    return float(s) if "." in s else int(s)


def _joint_name(match: re.Match) -> str:
    joint = match.group("joint").lower()
    side = (match.groupdict().get("side") or "").lower()
    return f"{side}_{joint}" if side else joint


def parse_note(note: ClinicalNote, grammar: Optional[Grammar] = None) -> ConstraintSet:
    """Extract constraints from one prescription note.

    Raises EmptyNote for blank text and ConflictingConstraints when the
    same joint/axis receives contradictory limits within the note.
    """
    grammar = grammar or default_grammar()
    text = note.text.strip()
    if not text:
        raise EmptyNote(f"note {note.note_id!r} is empty")

    builders: dict = {}  # key -> field dict
    order: list = []
    residual: list = []
    pending_modifiers: list = []
    note_velocity: Optional[float] = None
    urgent = False

    def builder(key: tuple) -> dict:
        if key not in builders:
            builders[key] = {}
            order.append(key)
        return builders[key]

    for sentence in split_sentences(text):
        produced = False
        for kind, pattern in grammar.angle_patterns:
            for m in pattern.finditer(sentence):
                joint = _joint_name(m)
                axis = m.group("axis").lower()
                value = _number(m.group("deg"))
                b = builder((joint, axis, None))
                if kind in b and b[kind] != value:
                    raise ConflictingConstraints(
                        f"{joint}/{axis}: {kind} given as both {b[kind]} and {value}")
                b[kind] = value
                produced = True
        for relation, pattern in grammar.spatial_patterns:
            m = pattern.search(sentence)
            if m:
                joint = _joint_name(m)
                b = builder((joint, None, relation))
                b["spatial_rel"] = relation
                produced = True
        modifier = False
        velocity = grammar.pacing_velocity(sentence)
        if velocity is not None:
            note_velocity = velocity if note_velocity is None else min(note_velocity, velocity)
            modifier = True
        if grammar.is_urgent(sentence):
            urgent = True
            modifier = True
        if not produced:
            if modifier:
                pending_modifiers.append(sentence)
            else:
                residual.append(sentence)

    if not builders:
        # modifiers had nothing to attach to; conserve them as residual
        residual.extend(pending_modifiers)

    constraints = []
    for joint, axis, spatial_rel in order:
        fields = builders[(joint, axis, spatial_rel)]
        max_angle = fields.get("max_angle")
        min_angle = fields.get("min_angle")
        if max_angle is not None and min_angle is not None and min_angle >= max_angle:
            raise ConflictingConstraints(
                f"{joint}/{axis}: min_angle {min_angle} not below max_angle {max_angle}")
        constraints.append(Constraint(
            constraint_id=f"{note.note_id}:{joint}:{axis or spatial_rel}",
            joint=joint,
            axis=axis,
            max_angle=max_angle,
            min_angle=min_angle,
            spatial_rel=spatial_rel,
            max_velocity=note_velocity,
            urgency="high" if urgent else "normal",
        ))
    return ConstraintSet(constraints=tuple(constraints),
                         residual_text=tuple(residual),
                         source_note_id=note.note_id)


class GrammarExtraction:
    """Default ExtractionProvider backed by the deterministic grammar."""

    def __init__(self, grammar: Optional[Grammar] = None):
        self.grammar = grammar

    def extract(self, note: ClinicalNote) -> ConstraintSet:
        return parse_note(note, grammar=self.grammar)


# ---------------------------------------------------------------------------
# Validation


def validate(cset: ConstraintSet) -> ValidationReport:
    """Check type invariants, physiologic plausibility, duplicates, conflicts."""
    findings = []
    seen_ids = set()
    for c in cset.constraints:
        cid = (c.constraint_id,)
        if not c.joint:
            findings.append(Finding("missing_joint", "constraint has no joint", cid))
        if not c.has_limit():
            findings.append(Finding(
                "no_limit", "constraint carries no limit field", cid))
        if c.max_angle is not None and not 0 < c.max_angle <= 180:
            findings.append(Finding(
                "angle_out_of_range",
                f"max_angle {c.max_angle} out of physiologic range (0, 180]", cid))
        if c.min_angle is not None and not 0 <= c.min_angle < 180:
            findings.append(Finding(
                "angle_out_of_range",
                f"min_angle {c.min_angle} out of physiologic range [0, 180)", cid))
        if (c.min_angle is not None and c.max_angle is not None
                and c.min_angle >= c.max_angle):
            findings.append(Finding(
                "min_not_below_max",
                f"min_angle {c.min_angle} must be below max_angle {c.max_angle}", cid))
        if c.max_velocity is not None and c.max_velocity <= 0:
            findings.append(Finding(
                "velocity_out_of_range",
                f"max_velocity {c.max_velocity} must be positive", cid))
        if c.urgency not in URGENCY_LEVELS:
            findings.append(Finding(
                "bad_urgency", f"urgency {c.urgency!r} not in {URGENCY_LEVELS}", cid))
        if c.constraint_id in seen_ids:
            findings.append(Finding("duplicate_id",
                                    f"constraint_id {c.constraint_id!r} repeats", cid))
        seen_ids.add(c.constraint_id)
    by_key: dict = {}
    for c in cset.constraints:
        by_key.setdefault(c.key(), []).append(c)
    for key, group in by_key.items():
        if len(group) < 2:
            continue
        for fname in ("max_angle", "min_angle", "max_velocity"):
            values = {getattr(c, fname) for c in group if getattr(c, fname) is not None}
            if len(values) > 1:
                findings.append(Finding(
                    "conflict",
                    f"{key[0]}/{key[1] or key[2]}: contradictory {fname} values {sorted(values)}",
                    tuple(c.constraint_id for c in group)))
    return ValidationReport(findings=tuple(findings))


# ---------------------------------------------------------------------------
# Merge


def _strictest(a: Constraint, b: Constraint) -> Constraint:
    first, second = sorted((a, b), key=lambda c: c.constraint_id)

    def pick(fname, chooser):
        va, vb = getattr(a, fname), getattr(b, fname)
        if va is None:
            return vb
        if vb is None:
            return va
        return chooser(va, vb)

    extensions = dict(second.extensions)
    extensions.update(first.extensions)  # smaller id wins collisions
    return Constraint(
        constraint_id=first.constraint_id,
        joint=a.joint,
        axis=a.axis,
        spatial_rel=a.spatial_rel,
        max_angle=pick("max_angle", min),
        min_angle=pick("min_angle", max),
        max_velocity=pick("max_velocity", min),
        urgency="high" if "high" in (a.urgency, b.urgency) else "normal",
        extensions=extensions,
    )


def merge(a: ConstraintSet, b: ConstraintSet) -> ConstraintSet:
    """Union of two sets; on the same joint/axis the stricter limit wins.

    Commutative up to ordering (output preserves first appearance);
    merge(x, x) == x.
    """
    merged: dict = {}
    order: list = []
    for c in list(a.constraints) + list(b.constraints):
        key = c.key()
        if key not in merged:
            merged[key] = c
            order.append(key)
        else:
            merged[key] = _strictest(merged[key], c)
    residual = list(a.residual_text)
    seen = set(residual)
    for s in b.residual_text:
        if s not in seen:
            seen.add(s)
            residual.append(s)
    if a.source_note_id == b.source_note_id:
        source = a.source_note_id
    else:
        source = "+".join(sorted(filter(None, {a.source_note_id, b.source_note_id})))
    return ConstraintSet(constraints=tuple(merged[k] for k in order),
                         residual_text=tuple(residual),
                         source_note_id=source)


# ---------------------------------------------------------------------------
# Schema (canonical JSON document, field names per the constraint table)

SCHEMA_VERSION = 1
_KNOWN_FIELDS = ("constraint_id", "joint", "axis", "max_angle", "min_angle",
                 "spatial_rel", "max_velocity", "urgency")


def to_schema(cset: ConstraintSet) -> dict:
    out_constraints = []
    for c in cset.constraints:
        entry = {"constraint_id": c.constraint_id, "joint": c.joint,
                 "urgency": c.urgency}
        for fname in ("axis", "max_angle", "min_angle", "spatial_rel", "max_velocity"):
            value = getattr(c, fname)
            if value is not None:
                entry[fname] = value
        entry.update(c.extensions)
        out_constraints.append(entry)
    return {
        "version": SCHEMA_VERSION,
        "source_note_id": cset.source_note_id,
        "constraints": out_constraints,
        "residual_text": list(cset.residual_text),
    }


def to_json(cset: ConstraintSet) -> str:
    """Canonical UTF-8 serialization: sorted keys, compact separators."""
    return json.dumps(to_schema(cset), sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def from_schema(doc: dict) -> ConstraintSet:
    if not isinstance(doc, dict):
        raise SchemaViolation("$", "document must be an object")
    raw = doc.get("constraints")
    if not isinstance(raw, list):
        raise SchemaViolation("constraints", "must be an array")
    source = doc.get("source_note_id", "")
    constraints = []
    seen = set()
    for i, entry in enumerate(raw):
        path = f"constraints[{i}]"
        if not isinstance(entry, dict):
            raise SchemaViolation(path, "must be an object")
        joint = entry.get("joint")
        if not isinstance(joint, str) or not joint:
            raise SchemaViolation(f"{path}.joint", "required non-empty string")
        for fname in ("max_angle", "min_angle", "max_velocity"):
            value = entry.get(fname)
            if value is not None and not isinstance(value, (int, float)):
                raise SchemaViolation(f"{path}.{fname}", "must be a number")
        urgency = entry.get("urgency", "normal")
        if urgency not in URGENCY_LEVELS:
            raise SchemaViolation(f"{path}.urgency", f"must be one of {URGENCY_LEVELS}")
        c = Constraint(
            constraint_id=str(entry.get("constraint_id") or f"{source or 'doc'}:{i}"),
            joint=joint,
            axis=entry.get("axis"),
            max_angle=entry.get("max_angle"),
            min_angle=entry.get("min_angle"),
            spatial_rel=entry.get("spatial_rel"),
            max_velocity=entry.get("max_velocity"),
            urgency=urgency,
            extensions={k: v for k, v in entry.items() if k not in _KNOWN_FIELDS},
        )
        if not c.has_limit():
            raise SchemaViolation(
                path, "at least one of max_angle, min_angle, spatial_rel, "
                      "max_velocity is required")
        if c.constraint_id in seen:
            raise SchemaViolation(f"{path}.constraint_id",
                                  f"duplicate id {c.constraint_id!r}")
        seen.add(c.constraint_id)
        constraints.append(c)
    residual = doc.get("residual_text", [])
    if not isinstance(residual, list):
        raise SchemaViolation("residual_text", "must be an array")
    return ConstraintSet(constraints=tuple(constraints),
                         residual_text=tuple(str(s) for s in residual),
                         source_note_id=str(source))
