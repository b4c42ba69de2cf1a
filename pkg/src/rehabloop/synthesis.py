"""Demonstration-video prompt builder plus a pluggable generation provider.

The prompt demonstrates strictly less range than the prescription allows
(a 90-degree cap renders as a stop at 89), so the avatar can never
visually encourage over-extension. Actual video generation sits behind a
provider interface; the bundled mock returns a content-addressed
placeholder reference.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .constraints import ConstraintSet
from .providers import ProviderUnavailable, SynthesisProvider

DEFAULT_SAFETY_MARGIN_DEG = 1.0


class NoRenderableConstraint(ValueError):
    """The set has no angle or spatial constraint to demonstrate."""


@dataclass(frozen=True)
class SynthesisPrompt:
    text: str
    stop_angle_deg: Optional[float]
    constraint_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "constraint_ids", tuple(self.constraint_ids))


def default_template() -> str:
    return (resources.files("rehabloop")
            .joinpath("data/prompt_template.txt")
            .read_text(encoding="utf-8").strip())


def _spell_joint(joint: str) -> str:
    return joint.replace("_", " ")


def build_prompt(cset: ConstraintSet, template: Optional[str] = None,
                 safety_margin_deg: float = DEFAULT_SAFETY_MARGIN_DEG) -> SynthesisPrompt:
    """Render the generation prompt for a validated constraint set.

    stop_angle_deg is the smallest max_angle minus the safety margin and
    is always strictly below every referenced cap.
    """
    if safety_margin_deg <= 0:
        raise ValueError("safety_margin_deg must be positive")
    template = template or default_template()
    angle_constraints = [c for c in cset.constraints if c.max_angle is not None]
    spatial_constraints = [c for c in cset.constraints if c.spatial_rel is not None]
    if not angle_constraints and not spatial_constraints:
        raise NoRenderableConstraint(
            "constraint set has no angle or spatial constraint to demonstrate")

    movements = []
    stop_angle = None
    referenced = []
    if angle_constraints:
        stop_angle = min(c.max_angle for c in angle_constraints) - safety_margin_deg
        for c in angle_constraints:
            motion = f"{_spell_joint(c.joint)} {c.axis}" if c.axis else _spell_joint(c.joint)
            movements.append(f"a controlled {motion}")
            referenced.append(c.constraint_id)
        stop_value = int(stop_angle) if float(stop_angle).is_integer() else stop_angle
        stop_clause = f"explicitly stops at {stop_value} degrees"
    else:
        stop_clause = "stays well inside the prescribed safe range"
    for c in spatial_constraints:
        if c.spatial_rel == "behind_toe":
            movements.append(
                f"a squat keeping the {_spell_joint(c.joint)} behind the toes "
                "at all times")
        else:
            movements.append(
                f"a movement honoring the {c.spatial_rel} rule for the "
                f"{_spell_joint(c.joint)}")
        referenced.append(c.constraint_id)

    movement_clause = "The exercise is " + " and ".join(movements) + "."
    if any(c.max_velocity is not None for c in cset.constraints):
        pacing_clause = "The movement keeps a slow, controlled tempo throughout."
    else:
        pacing_clause = "The movement keeps a steady, comfortable tempo."

    text = template.format(movement_clause=movement_clause,
                           stop_clause=stop_clause,
                           pacing_clause=pacing_clause)
    return SynthesisPrompt(text=text, stop_angle_deg=stop_angle,
                           constraint_ids=tuple(referenced))


def synthesize(prompt: SynthesisPrompt, provider: SynthesisProvider) -> str:
    """Ask the provider for a video reference for this prompt."""
    return provider.generate(prompt)


class MockSynthesis:
    """Deterministic stand-in provider: content-addressed placeholder URL."""

    def generate(self, prompt: SynthesisPrompt) -> str:
        digest = hashlib.sha256(prompt.text.encode("utf-8")).hexdigest()[:16]
        return f"mock://physio-twin/{digest}"


class FlakySynthesis:
    """Test double that fails a configurable number of times."""

    def __init__(self, failures: int = 1, inner: Optional[SynthesisProvider] = None):
        self.failures = failures
        self.inner = inner or MockSynthesis()

    def generate(self, prompt: SynthesisPrompt) -> str:
        if self.failures > 0:
            self.failures -= 1
            raise ProviderUnavailable("synthesis provider timed out")
        return self.inner.generate(prompt)
